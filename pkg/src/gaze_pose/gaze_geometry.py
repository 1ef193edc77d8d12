"""Ellipse-to-circle pose recovery and gaze disambiguation.

Coordinate conventions used throughout the package:

* Image: origin top-left, x right, y down.
* Camera: z points from the camera into the scene; the projection is
    p_x = pr_x - f_x * X / Z,   p_y = pr_y + f_y * Y / Z
  which is the convention implied by the unprojection equations below
  (note the minus on the x axis only).
* The reported gaze normal is a unit vector pointing from the eye
  toward the camera, so its z component is negative for a visible iris.

The projected major-axis angle of an iris ellipse is perpendicular to
the direction the iris leans, and the x-mirror in the projection
reflects image angles, so the tilt azimuth fed to the normal formula is
-(psi + pi/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ellipse_fit import Ellipse

# Below this iris/sclera pixel displacement the mirror pair cannot be
# separated geometrically and the previous frame's choice is reused.
DEFAULT_AMBIGUITY_EPS_PX = 3.0


@dataclass(frozen=True)
class CameraIntrinsics:
    f_x: float
    f_y: float
    pr_x: float
    pr_y: float

    def __post_init__(self):
        if self.f_x <= 0 or self.f_y <= 0:
            raise ValueError("focal lengths must be positive")

    @property
    def f_z(self) -> float:
        return (self.f_x + self.f_y) / 2.0

    def project(self, xyz: np.ndarray) -> np.ndarray:
        """Camera-frame mm point to pixel coordinates (package convention)."""
        xyz = np.asarray(xyz, dtype=np.float64)
        return np.array(
            [
                self.pr_x - self.f_x * xyz[0] / xyz[2],
                self.pr_y + self.f_y * xyz[1] / xyz[2],
            ]
        )


@dataclass(frozen=True)
class IrisModel:
    """Physical iris radius in millimeters."""

    Ir_R: float = 5.9

    def __post_init__(self):
        if self.Ir_R <= 0:
            raise ValueError("iris radius must be positive")


@dataclass(frozen=True)
class CandidateNormals:
    """The two mirror reconstructions of the iris-plane normal."""

    n_a: np.ndarray
    n_b: np.ndarray


@dataclass(frozen=True)
class GazeEstimate:
    position: np.ndarray  # iris center, camera frame, mm
    normal: np.ndarray  # unit, pointing from eye toward camera
    theta: float  # tilt angle, radians
    psi: float  # image ellipse angle, radians
    gamma: float  # off-center correction angle, radians
    ambiguity_resolved: bool


def unproject_iris(e: Ellipse, cam: CameraIntrinsics, iris: IrisModel) -> np.ndarray:
    """Iris center in the camera frame from similar triangles."""
    Ir_z = cam.f_z * iris.Ir_R / e.ax_maj
    Ir_x = -Ir_z * (e.p_x - cam.pr_x) / cam.f_x
    Ir_y = Ir_z * (e.p_y - cam.pr_y) / cam.f_y
    return np.array([Ir_x, Ir_y, Ir_z])


def tilt_angle(e: Ellipse) -> float:
    """Iris tilt from the axis ratio: arccos(ax_min / ax_maj), clamped."""
    return math.acos(min(max(e.ax_min / e.ax_maj, 0.0), 1.0))


def candidate_normals(theta: float, psi: float) -> CandidateNormals:
    """Both normals consistent with tilt theta and tilt azimuth psi."""
    if not 0.0 <= theta <= math.pi / 2 + 1e-12:
        raise ValueError("theta must lie in [0, pi/2]")
    st, ct = math.sin(theta), math.cos(theta)
    n_a = np.array([-st * math.cos(psi), -st * math.sin(psi), ct])
    return CandidateNormals(n_a=n_a, n_b=np.array([-n_a[0], -n_a[1], ct]))


def rodrigues_rotate(n: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    """n cos(g) + (l x n) sin(g) + l (l . n)(1 - cos(g))."""
    n = np.asarray(n, dtype=np.float64)
    axis = np.asarray(axis, dtype=np.float64)
    c, s = math.cos(angle), math.sin(angle)
    return n * c + np.cross(axis, n) * s + axis * np.dot(axis, n) * (1.0 - c)


def correction_params(position: np.ndarray) -> tuple[float, float]:
    """Off-axis displacement d and correction angle gamma for a position."""
    d = math.hypot(position[0], position[1])
    return d, math.atan2(d, position[2])


def correction_axis(position: np.ndarray, corrected_axis: bool = True) -> np.ndarray:
    """Rotation axis for the off-center correction.

    corrected_axis=True uses z-cross-displacement, [-Ir_y/d, Ir_x/d, 0],
    which is the variant that survives the round-trip oracle and ships
    as the default.  False selects the component-swapped alternative
    [Ir_y/d, Ir_x/d, 0] (kept for comparison; it does not validate).
    """
    d = math.hypot(position[0], position[1])
    if corrected_axis:
        return np.array([-position[1] / d, position[0] / d, 0.0])
    return np.array([position[1] / d, position[0] / d, 0.0])


def off_center_correction(
    n: np.ndarray, position: np.ndarray, corrected_axis: bool = True
) -> np.ndarray:
    """Rotate a centered-view normal to account for the iris being off-axis."""
    if position[2] <= 0:
        raise ValueError("iris must be in front of the camera (Ir_z > 0)")
    d, gamma = correction_params(position)
    if d < 1e-9:
        return np.asarray(n, dtype=np.float64)
    out = rodrigues_rotate(n, correction_axis(position, corrected_axis), gamma)
    return out / np.linalg.norm(out)


def resolve_ambiguity(
    c: CandidateNormals,
    iris_center_px: np.ndarray,
    sclera_center_px: np.ndarray,
    prev: Optional[GazeEstimate] = None,
    eps: float = DEFAULT_AMBIGUITY_EPS_PX,
) -> tuple[np.ndarray, bool]:
    """Pick the candidate whose gaze matches the iris-vs-sclera offset.

    A candidate's lateral components map to pixel axes as (n_x, -n_y)
    under the projection convention; the one with positive dot product
    against delta = iris - sclera is the physical solution.  Below eps
    pixels of displacement the rule is powerless: fall back to the
    candidate closest to the previous estimate, or n_a without one.
    The flag reports whether the geometric rule (not fallback) decided.
    """
    delta = np.asarray(iris_center_px, dtype=np.float64) - np.asarray(
        sclera_center_px, dtype=np.float64
    )
    if np.hypot(delta[0], delta[1]) < eps:
        if prev is not None:
            # compare in the reported (flipped) convention
            if np.dot(-c.n_b, prev.normal) > np.dot(-c.n_a, prev.normal):
                return c.n_b, False
        return c.n_a, False
    score_a = delta[0] * c.n_a[0] - delta[1] * c.n_a[1]
    return (c.n_a, True) if score_a >= 0 else (c.n_b, True)


def estimate_gaze(
    iris_ellipse: Ellipse,
    sclera_center_px: np.ndarray,
    cam: CameraIntrinsics,
    iris: IrisModel,
    prev: Optional[GazeEstimate] = None,
    corrected_axis: bool = True,
    ambiguity_eps: float = DEFAULT_AMBIGUITY_EPS_PX,
) -> GazeEstimate:
    """Full chain: unproject, tilt, candidates, disambiguate, correct."""
    position = unproject_iris(iris_ellipse, cam, iris)
    theta = tilt_angle(iris_ellipse)
    tilt_azimuth = -(iris_ellipse.psi + math.pi / 2.0)
    cands = candidate_normals(theta, tilt_azimuth)
    chosen, resolved = resolve_ambiguity(
        cands,
        iris_ellipse.center,
        sclera_center_px,
        prev=prev,
        eps=ambiguity_eps,
    )
    d, gamma = correction_params(position)
    corrected = off_center_correction(chosen, position, corrected_axis)
    normal = -corrected
    normal = normal / np.linalg.norm(normal)
    return GazeEstimate(
        position=position,
        normal=normal,
        theta=theta,
        psi=iris_ellipse.psi,
        gamma=gamma if d >= 1e-9 else 0.0,
        ambiguity_resolved=resolved,
    )
