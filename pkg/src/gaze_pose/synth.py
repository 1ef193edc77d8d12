"""Synthetic eye scenes: forward projection, rasterization, sweeps.

The forward projection is the exact inverse of the estimation chain in
gaze_geometry (same axis conventions, same correction), which makes it
the oracle for every round-trip and accuracy test.  Note that this
model deviates from a true perspective conic by O((R/Z)^2); the whole
package uses the single model consistently on both sides.

The eyeball is rendered as an orthographically shaded sphere under a
perspective silhouette, with a dark iris disc, an optional linear
shadow ramp, and optional specular glints inside the iris.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ellipse_fit import Ellipse
from .errors import DegenerateProjectionError, OutOfViewError
from .gaze_geometry import (
    CameraIntrinsics,
    correction_axis,
    correction_params,
    rodrigues_rotate,
)
from .imgproc import GrayImage, save_image

SCLERA_ALBEDO = 0.9
IRIS_ALBEDO = 0.15
BACKGROUND_ALBEDO = 0.55
GLINT_INTENSITY = 0.95


@dataclass(frozen=True)
class EyeScene:
    """Ground-truth eyeball pose plus lighting for the renderer."""

    eye_center: np.ndarray  # mm, camera frame
    gaze_normal: np.ndarray  # unit, pointing from eye toward camera
    eye_radius: float = 12.0
    iris_radius: float = 5.9
    ambient: float = 0.25
    shadow_dir: tuple[float, float] = (1.0, 0.0)
    shadow_strength: float = 0.0
    # (offset_u, offset_v) in iris-ellipse unit coords, radius px, intensity
    glints: tuple[tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        g = np.asarray(self.gaze_normal, dtype=np.float64)
        object.__setattr__(self, "gaze_normal", g / np.linalg.norm(g))
        object.__setattr__(
            self, "eye_center", np.asarray(self.eye_center, dtype=np.float64)
        )
        if not 0 < self.iris_radius < self.eye_radius:
            raise ValueError("need 0 < iris_radius < eye_radius")
        if not 0.0 <= self.ambient <= 1.0:
            raise ValueError("ambient must lie in [0, 1]")

    @property
    def iris_center(self) -> np.ndarray:
        """The iris disc sits where the gaze ray exits the eyeball."""
        offset = math.sqrt(self.eye_radius**2 - self.iris_radius**2)
        return self.eye_center + offset * self.gaze_normal


@dataclass(frozen=True)
class SweepSpec:
    axis: np.ndarray  # unit rotation axis, camera frame
    angle_start: float  # degrees
    angle_end: float
    frames: int
    width: int
    height: int
    cam: CameraIntrinsics

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError("a sweep needs at least 2 frames")
        a = np.asarray(self.axis, dtype=np.float64)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))

    def angles(self) -> np.ndarray:
        return np.linspace(self.angle_start, self.angle_end, self.frames)


def rotation_about_axis(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """3x3 rotation matrix about a unit axis."""
    x, y, z = np.asarray(axis, dtype=np.float64)
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def project_iris_ellipse(
    scene: EyeScene, cam: CameraIntrinsics, corrected_axis_variant: bool = True
) -> Ellipse:
    """Analytic image ellipse of the iris circle.

    Exact inverse of the estimation chain: unprojecting this ellipse and
    undoing the off-center correction returns the scene pose bit-for-bit
    (up to floating point).
    """
    P = scene.iris_center
    if P[2] <= 1e-9:
        raise DegenerateProjectionError("iris plane at or behind the camera origin")
    ax_maj = cam.f_z * scene.iris_radius / P[2]
    p = cam.project(P)

    n = -scene.gaze_normal  # centered-frame convention (positive z)
    d, gamma = correction_params(P)
    if d >= 1e-9:
        n = rodrigues_rotate(n, correction_axis(P, corrected_axis_variant), -gamma)
        n = n / np.linalg.norm(n)
    nz = min(max(float(n[2]), -1.0), 1.0)
    if nz <= 0.0:
        raise DegenerateProjectionError("iris is edge-on or back-facing")
    theta = math.acos(nz)
    if math.sin(theta) < 1e-12:
        psi = 0.0
    else:
        azimuth = math.atan2(-n[1], -n[0])
        psi = (-azimuth - math.pi / 2.0) % math.pi
    return Ellipse(
        p_x=float(p[0]),
        p_y=float(p[1]),
        ax_maj=float(ax_maj),
        ax_min=float(ax_maj * math.cos(theta)),
        psi=float(psi),
    )


def project_circle_exact(
    center: np.ndarray, normal: np.ndarray, radius: float, cam: CameraIntrinsics
) -> Ellipse:
    """True perspective conic of a 3D circle (used for the sclera limb)."""
    center = np.asarray(center, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    if center[2] <= 1e-9:
        raise DegenerateProjectionError("circle at or behind the camera origin")
    # package projection mirrors x
    Cm = np.array([-center[0], center[1], center[2]])
    nm = np.array([-normal[0], normal[1], normal[2]])
    nm = nm / np.linalg.norm(nm)
    seed = np.array([1.0, 0.0, 0.0]) if abs(nm[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(nm, seed)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nm, e1)
    K = np.array([[cam.f_x, 0, cam.pr_x], [0, cam.f_y, cam.pr_y], [0, 0, 1.0]])
    H = K @ np.column_stack([e1, e2, Cm])
    try:
        Hi = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise DegenerateProjectionError("circle plane through camera origin") from exc
    Q = Hi.T @ np.diag([1.0, 1.0, -radius * radius]) @ Hi
    A, B, C = Q[0, 0], 2 * Q[0, 1], Q[1, 1]
    D, E, F = 2 * Q[0, 2], 2 * Q[1, 2], Q[2, 2]
    cx, cy = np.linalg.solve([[2 * A, B], [B, 2 * C]], [-D, -E])
    Fc = A * cx * cx + B * cx * cy + C * cy * cy + D * cx + E * cy + F
    eigvals, eigvecs = np.linalg.eigh(np.array([[A, B / 2.0], [B / 2.0, C]]))
    ratios = -Fc / eigvals
    if np.any(ratios <= 0):
        raise DegenerateProjectionError("projection is not an ellipse")
    semi = np.sqrt(ratios)
    i = int(np.argmax(semi))
    psi = math.atan2(eigvecs[1, i], eigvecs[0, i]) % math.pi
    return Ellipse(float(cx), float(cy), float(2 * semi[i]), float(2 * semi[1 - i]), psi)


def project_sclera_ellipse(scene: EyeScene, cam: CameraIntrinsics) -> Ellipse:
    """Exact silhouette (limb) ellipse of the eyeball sphere."""
    E = scene.eye_center
    dist = float(np.linalg.norm(E))
    if dist <= scene.eye_radius:
        raise DegenerateProjectionError("camera inside the eyeball")
    shrink = 1.0 - (scene.eye_radius / dist) ** 2
    limb_center = E * shrink
    limb_radius = scene.eye_radius * math.sqrt(shrink)
    return project_circle_exact(limb_center, E / dist, limb_radius, cam)


def _glint_centers_px(scene: EyeScene, iris_e: Ellipse) -> list[tuple[float, float, float, float]]:
    a, b = iris_e.semi_axes
    c, s = math.cos(iris_e.psi), math.sin(iris_e.psi)
    out = []
    for (u, v, radius_px, intensity) in scene.glints:
        gx = iris_e.p_x + c * a * u - s * b * v
        gy = iris_e.p_y + s * a * u + c * b * v
        out.append((gx, gy, radius_px, intensity))
    return out


def render_frame(
    scene: EyeScene, cam: CameraIntrinsics, dims: tuple[int, int], supersample: int = 4
) -> tuple[GrayImage, dict]:
    """Rasterize a frame; metadata carries every ground-truth quantity."""
    width, height = dims
    iris_e = project_iris_ellipse(scene, cam)
    sclera_e = project_sclera_ellipse(scene, cam)
    x_min, y_min, x_max, y_max = iris_e.bbox()
    if x_min < 0 or y_min < 0 or x_max > width - 1 or y_max > height - 1:
        raise OutOfViewError("iris projects outside the frame")

    img = np.full((height, width), BACKGROUND_ALBEDO, dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)

    # sclera sphere: orthographic Lambertian shading inside the silhouette
    sx0, sy0, sx1, sy1 = sclera_e.bbox()
    sx0, sy0 = max(int(sx0) - 1, 0), max(int(sy0) - 1, 0)
    sx1, sy1 = min(int(sx1) + 2, width), min(int(sy1) + 2, height)
    gx, gy = np.meshgrid(xs[sx0:sx1], ys[sy0:sy1])
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    u = sclera_e.to_unit_circle(pts)
    rho2 = (u**2).sum(axis=1).reshape(gx.shape)
    inside = rho2 <= 1.0
    shade = scene.ambient + (1.0 - scene.ambient) * np.sqrt(np.clip(1.0 - rho2, 0, 1))
    region = img[sy0:sy1, sx0:sx1]
    region[inside] = SCLERA_ALBEDO * shade[inside]

    # iris disc with subpixel coverage (supersampled box filter)
    ix0, iy0 = max(int(x_min) - 1, 0), max(int(y_min) - 1, 0)
    ix1, iy1 = min(int(x_max) + 2, width), min(int(y_max) + 2, height)
    gx, gy = np.meshgrid(xs[ix0:ix1], ys[iy0:iy1])
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    cover = np.zeros(gx.shape, dtype=np.float64)
    for dx in offs:
        for dy in offs:
            sub = np.column_stack([(gx + dx).ravel(), (gy + dy).ravel()])
            cover += iris_e.contains(sub).reshape(gx.shape)
    cover /= supersample * supersample
    region = img[iy0:iy1, ix0:ix1]
    img[iy0:iy1, ix0:ix1] = region * (1.0 - cover) + IRIS_ALBEDO * cover

    for gx_c, gy_c, radius_px, intensity in _glint_centers_px(scene, iris_e):
        bx0, by0 = max(int(gx_c - radius_px) - 1, 0), max(int(gy_c - radius_px) - 1, 0)
        bx1 = min(int(gx_c + radius_px) + 2, width)
        by1 = min(int(gy_c + radius_px) + 2, height)
        gx, gy = np.meshgrid(xs[bx0:bx1], ys[by0:by1])
        hit = (gx - gx_c) ** 2 + (gy - gy_c) ** 2 <= radius_px**2
        img[by0:by1, bx0:bx1][hit] = intensity

    if scene.shadow_strength > 0.0:
        dx, dy = scene.shadow_dir
        norm = math.hypot(dx, dy)
        dx, dy = dx / norm, dy / norm
        proj = xs[None, :] * dx + ys[:, None] * dy
        lo, hi = proj.min(), proj.max()
        t = (proj - lo) / max(hi - lo, 1e-9)
        img *= 1.0 - scene.shadow_strength * t

    raster = GrayImage.from_array(np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8))

    px, py = np.meshgrid(xs, ys)
    mask = iris_e.contains(np.column_stack([px.ravel(), py.ravel()])).reshape(
        height, width
    )
    metadata = {
        "iris_ellipse": _ellipse_dict(iris_e),
        "sclera_ellipse": _ellipse_dict(sclera_e),
        "gaze_normal": scene.gaze_normal.tolist(),
        "iris_center_mm": scene.iris_center.tolist(),
        "eye_center_mm": scene.eye_center.tolist(),
        "iris_center_px": [iris_e.p_x, iris_e.p_y],
        "sclera_center_px": [sclera_e.p_x, sclera_e.p_y],
        "iris_radius_mm": scene.iris_radius,
        "eye_radius_mm": scene.eye_radius,
        "iris_mask": mask,
    }
    return raster, metadata


def _ellipse_dict(e: Ellipse) -> dict:
    return {
        "p_x": e.p_x,
        "p_y": e.p_y,
        "ax_maj": e.ax_maj,
        "ax_min": e.ax_min,
        "psi": e.psi,
    }


def ellipse_from_dict(d: dict) -> Ellipse:
    return Ellipse(d["p_x"], d["p_y"], d["ax_maj"], d["ax_min"], d["psi"])


def sweep_scenes(spec: SweepSpec, template: EyeScene) -> list[tuple[float, EyeScene]]:
    """Scene per sweep angle: the template gaze rotated about the axis."""
    out = []
    for angle in spec.angles():
        R = rotation_about_axis(spec.axis, math.radians(angle))
        out.append((float(angle), replace(template, gaze_normal=R @ template.gaze_normal)))
    return out


def generate_sweep(
    spec: SweepSpec,
    template: EyeScene,
    out_dir,
    roi_margin: float = 0.2,
    seed: int = 0,
) -> dict:
    """Render a sweep dataset: frames, masks, metadata, sidecars, manifest."""
    from .roi import oracle_roi, write_sidecar_boxes  # local import: roi needs synth types

    out_dir = Path(out_dir)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (angle, scene) in enumerate(sweep_scenes(spec, template)):
        raster, meta = render_frame(scene, spec.cam, (spec.width, spec.height))
        stem = f"frame_{i:04d}"
        save_image(raster, out_dir / "frames" / f"{stem}.png")
        mask = meta.pop("iris_mask")
        save_image(
            GrayImage.from_array((mask * 255).astype(np.uint8)),
            out_dir / "frames" / f"{stem}_mask.png",
        )
        meta["angle_deg"] = angle
        meta["index"] = i
        with open(out_dir / "frames" / f"{stem}.json", "w") as fh:
            json.dump(meta, fh, sort_keys=True)
        pair = oracle_roi(scene, spec.cam, (spec.width, spec.height), margin=roi_margin)
        write_sidecar_boxes(pair, (spec.width, spec.height), out_dir / "frames" / f"{stem}.txt")
        entries.append(
            {
                "index": i,
                "angle_deg": angle,
                "image": f"frames/{stem}.png",
                "mask": f"frames/{stem}_mask.png",
                "meta": f"frames/{stem}.json",
                "boxes": f"frames/{stem}.txt",
            }
        )
    manifest = {
        "width": spec.width,
        "height": spec.height,
        "intrinsics": {
            "f_x": spec.cam.f_x,
            "f_y": spec.cam.f_y,
            "pr_x": spec.cam.pr_x,
            "pr_y": spec.cam.pr_y,
        },
        "sweep": {
            "axis": spec.axis.tolist(),
            "angle_start": spec.angle_start,
            "angle_end": spec.angle_end,
            "frames": spec.frames,
        },
        "scene": {
            "eye_center": template.eye_center.tolist(),
            "base_gaze": template.gaze_normal.tolist(),
            "eye_radius_mm": template.eye_radius,
            "iris_radius_mm": template.iris_radius,
            "ambient": template.ambient,
            "shadow_dir": list(template.shadow_dir),
            "shadow_strength": template.shadow_strength,
            "glints": [list(g) for g in template.glints],
        },
        "roi_margin": roi_margin,
        "seed": seed,
        "frames": entries,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest
