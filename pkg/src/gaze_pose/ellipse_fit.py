"""Direct least-squares ellipse fitting wrapped in RANSAC.

The direct fit is the numerically stable variant of the constrained
conic fit (4AC - B^2 = 1), computed on centroid-normalized coordinates.
RANSAC draws fixed-size samples from a seeded generator, scores models
by geometric inlier count, and refits the winner on all of its inliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitFailureError, RobustFitFailureError
from .imgproc import PixelPointList

MIN_FIT_POINTS = 6  # 5 determine a conic; one extra guards rank
RANSAC_SAMPLE_SIZE = 6


@dataclass(frozen=True)
class Ellipse:
    """Image-plane ellipse: center, full axis lengths, major-axis angle."""

    p_x: float
    p_y: float
    ax_maj: float  # full major axis, pixels
    ax_min: float  # full minor axis, pixels
    psi: float  # radians in [0, pi)
    residual_rms: float = 0.0

    def __post_init__(self):
        if not (self.ax_maj >= self.ax_min > 0):
            raise ValueError("ellipse requires ax_maj >= ax_min > 0")
        if not 0.0 <= self.psi < math.pi + 1e-12:
            raise ValueError("psi must lie in [0, pi)")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.p_x, self.p_y])

    @property
    def semi_axes(self) -> tuple[float, float]:
        return self.ax_maj / 2.0, self.ax_min / 2.0

    def to_unit_circle(self, pts: np.ndarray) -> np.ndarray:
        """Map image points into the frame where the ellipse is the unit circle."""
        pts = np.atleast_2d(pts)
        a, b = self.semi_axes
        c, s = math.cos(self.psi), math.sin(self.psi)
        dx = pts[:, 0] - self.p_x
        dy = pts[:, 1] - self.p_y
        return np.column_stack([(c * dx + s * dy) / a, (-s * dx + c * dy) / b])

    def boundary_points(self, ts: np.ndarray) -> np.ndarray:
        a, b = self.semi_axes
        c, s = math.cos(self.psi), math.sin(self.psi)
        x = a * np.cos(ts)
        y = b * np.sin(ts)
        return np.column_stack([self.p_x + c * x - s * y, self.p_y + s * x + c * y])

    def contains(self, pts: np.ndarray) -> np.ndarray:
        u = self.to_unit_circle(pts)
        return (u ** 2).sum(axis=1) <= 1.0

    def bbox(self) -> tuple[float, float, float, float]:
        """Axis-aligned (x_min, y_min, x_max, y_max) of the curve."""
        a, b = self.semi_axes
        c, s = math.cos(self.psi), math.sin(self.psi)
        ex = math.hypot(a * c, b * s)
        ey = math.hypot(a * s, b * c)
        return self.p_x - ex, self.p_y - ey, self.p_x + ex, self.p_y + ey


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 200
    inlier_tol: float = 1.5  # pixels, geometric point-to-ellipse distance
    min_inlier_frac: float = 0.5
    rng_seed: int = 42

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_tol <= 0:
            raise ValueError("inlier_tol must be positive")
        if not 0.0 < self.min_inlier_frac <= 1.0:
            raise ValueError("min_inlier_frac must lie in (0, 1]")


def _fit_conic(pts: np.ndarray) -> np.ndarray:
    """Constrained direct conic fit; returns [A, B, C, D, E, F]."""
    mean = pts.mean(axis=0)
    scale = float(np.sqrt(((pts - mean) ** 2).sum(axis=1)).mean())
    if scale < 1e-12:
        raise FitFailureError("points are coincident")
    P = (pts - mean) / scale
    x, y = P[:, 0], P[:, 1]
    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1 = D1.T @ D1
    S2 = D1.T @ D2
    S3 = D2.T @ D2
    try:
        T = -np.linalg.solve(S3, S2.T)
    except np.linalg.LinAlgError as exc:
        raise FitFailureError("rank-deficient point configuration") from exc
    M = S1 + S2 @ T
    M = np.array([M[2] / 2.0, -M[1], M[0] / 2.0])
    eigvals, eigvecs = np.linalg.eig(M)
    cond = 4.0 * eigvecs[0] * eigvecs[2] - eigvecs[1] ** 2
    valid = np.where(np.isreal(eigvals) & (cond > 0))[0]
    if len(valid) == 0:
        raise FitFailureError("best conic is not an ellipse")
    a1 = np.real(eigvecs[:, valid[0]])
    a2 = T @ a1
    A, B, C = a1
    D, E, F = a2
    # undo the normalization x' = (X - mx) / s
    mx, my = mean
    s2 = scale * scale
    return np.array(
        [
            A / s2,
            B / s2,
            C / s2,
            D / scale - (2 * A * mx + B * my) / s2,
            E / scale - (2 * C * my + B * mx) / s2,
            F
            + (A * mx * mx + B * mx * my + C * my * my) / s2
            - (D * mx + E * my) / scale,
        ]
    )


def _conic_to_ellipse(conic: np.ndarray, rms: float = 0.0) -> Ellipse:
    A, B, C, D, E, F = conic
    M = np.array([[2 * A, B], [B, 2 * C]])
    try:
        cx, cy = np.linalg.solve(M, [-D, -E])
    except np.linalg.LinAlgError as exc:
        raise FitFailureError("degenerate conic (no finite center)") from exc
    Fc = A * cx * cx + B * cx * cy + C * cy * cy + D * cx + E * cy + F
    eigvals, eigvecs = np.linalg.eigh(np.array([[A, B / 2.0], [B / 2.0, C]]))
    ratios = -Fc / eigvals
    if np.any(ratios <= 0) or not np.all(np.isfinite(ratios)):
        raise FitFailureError("conic is a hyperbola or parabola")
    semi = np.sqrt(ratios)
    i = int(np.argmax(semi))
    psi = math.atan2(eigvecs[1, i], eigvecs[0, i]) % math.pi
    return Ellipse(
        p_x=float(cx),
        p_y=float(cy),
        ax_maj=float(2 * semi[i]),
        ax_min=float(2 * semi[1 - i]),
        psi=float(psi),
        residual_rms=float(rms),
    )


def point_ellipse_distance(e: Ellipse, q: np.ndarray) -> float | np.ndarray:
    """Approximate geometric distance from point(s) to the ellipse curve.

    Maps the ellipse to the unit circle, takes |norm - 1| and rescales by
    the back-mapped radial direction, so a circle is handled exactly and
    points on the curve return 0.  Accuracy degrades deep inside very
    eccentric ellipses; near the curve (the RANSAC regime) the error is
    a few percent at iris-like eccentricities.
    """
    q = np.asarray(q, dtype=np.float64)
    scalar = q.ndim == 1
    u = e.to_unit_circle(q)
    r = np.hypot(u[:, 0], u[:, 1])
    a, b = e.semi_axes
    r_safe = np.where(r < 1e-12, 1.0, r)
    local = np.hypot(a * u[:, 0] / r_safe, b * u[:, 1] / r_safe)
    d = np.where(r < 1e-12, b, np.abs(r - 1.0) * local)
    return float(d[0]) if scalar else d


def fit_ellipse_direct(points: PixelPointList) -> Ellipse:
    """Least-squares conic constrained to the ellipse class."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < MIN_FIT_POINTS:
        raise ValueError(f"ellipse fit needs at least {MIN_FIT_POINTS} points")
    conic = _fit_conic(pts)
    e = _conic_to_ellipse(conic)
    rms = float(np.sqrt(np.mean(point_ellipse_distance(e, pts) ** 2)))
    return _conic_to_ellipse(conic, rms=rms)


def ransac_fit_ellipse(
    points: PixelPointList, cfg: RansacConfig = RansacConfig()
) -> tuple[Ellipse, np.ndarray]:
    """Robust ellipse fit; returns the model and its inlier indices.

    The best model maximizes the inlier count with ties broken by lower
    inlier RMS; the winner is refit on all of its inliers.  Results are
    deterministic for a given seed.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < MIN_FIT_POINTS:
        raise ValueError(f"RANSAC needs at least {MIN_FIT_POINTS} points")

    # Clean-data fast path: when a direct fit already explains every
    # point within tolerance the full search provably returns the same
    # model, so skip the sampling loop.
    try:
        direct = fit_ellipse_direct(pts)
        if bool(np.all(point_ellipse_distance(direct, pts) <= cfg.inlier_tol)):
            return direct, np.arange(n)
    except FitFailureError:
        pass

    rng = np.random.default_rng(cfg.rng_seed)
    best_inliers: np.ndarray | None = None
    best_key: tuple[int, float] | None = None
    for _ in range(cfg.iterations):
        idx = rng.choice(n, size=RANSAC_SAMPLE_SIZE, replace=False)
        try:
            model = fit_ellipse_direct(pts[idx])
        except FitFailureError:
            continue
        dists = point_ellipse_distance(model, pts)
        inliers = np.nonzero(dists <= cfg.inlier_tol)[0]
        if len(inliers) < max(cfg.min_inlier_frac * n, MIN_FIT_POINTS):
            continue
        key = (len(inliers), -float(np.sqrt(np.mean(dists[inliers] ** 2))))
        if best_key is None or key > best_key:
            best_key, best_inliers = key, inliers
    if best_inliers is None:
        raise RobustFitFailureError(
            f"no sample reached inlier fraction {cfg.min_inlier_frac}"
        )
    final = fit_ellipse_direct(pts[best_inliers])
    return final, best_inliers
