"""Bounding-box providers for the iris and sclera regions.

Three interchangeable sources feed the tracking pipeline:

* oracle   -- exact boxes from synthetic ground truth,
* sidecar  -- boxes replayed from a per-frame text file (the export
              format an external detector would write),
* intensity -- a classical fallback that finds the darkest blob.

A provider is a callable ``(img, meta) -> RoiPair`` where ``meta`` is
the per-frame metadata dict (ground-truth ellipses for the oracle,
the box-file path for the sidecar provider; the intensity provider
ignores it).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .ellipse_fit import Ellipse
from .errors import (
    DegenerateProjectionError,
    DetectionFailureError,
    OutOfViewError,
    SidecarParseError,
)
from .gaze_geometry import CameraIntrinsics
from .imgproc import GrayImage, Roi, adaptive_threshold, connected_dark_components
from .synth import EyeScene, ellipse_from_dict, project_iris_ellipse, project_sclera_ellipse

IRIS_CLASS = 0
SCLERA_CLASS = 1
MIN_ROI_SIDE = 8


@dataclass(frozen=True)
class RoiPair:
    """Iris and sclera boxes plus a detector-style confidence in [0, 1]."""

    iris_roi: Roi
    sclera_roi: Roi
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        i, s = self.iris_roi, self.sclera_roi
        inside = (
            i.x0 >= s.x0
            and i.y0 >= s.y0
            and i.x0 + i.w <= s.x0 + s.w
            and i.y0 + i.h <= s.y0 + s.h
        )
        if not inside:
            warnings.warn("iris box is not contained in the sclera box", stacklevel=2)


RoiProvider = Callable[[GrayImage, Optional[dict]], RoiPair]


def _clamped_roi(
    x_lo: float, y_lo: float, x_hi: float, y_hi: float, dims: tuple[int, int]
) -> Roi:
    """Integer box covering [x_lo, x_hi] x [y_lo, y_hi], clamped, >= 8x8."""
    width, height = dims
    x0 = max(int(math.floor(x_lo)), 0)
    y0 = max(int(math.floor(y_lo)), 0)
    x1 = min(int(math.ceil(x_hi)), width)
    y1 = min(int(math.ceil(y_hi)), height)
    # grow tiny boxes up to the minimum side where the frame allows
    while x1 - x0 < MIN_ROI_SIDE and (x0 > 0 or x1 < width):
        x0, x1 = max(x0 - 1, 0), min(x1 + 1, width)
    while y1 - y0 < MIN_ROI_SIDE and (y0 > 0 or y1 < height):
        y0, y1 = max(y0 - 1, 0), min(y1 + 1, height)
    return Roi(x0=x0, y0=y0, w=x1 - x0, h=y1 - y0)


def _inflated_ellipse_box(e: Ellipse, margin: float, dims: tuple[int, int]) -> Roi:
    x_min, y_min, x_max, y_max = e.bbox()
    hx = (x_max - x_min) / 2.0 * (1.0 + margin)
    hy = (y_max - y_min) / 2.0 * (1.0 + margin)
    return _clamped_roi(e.p_x - hx, e.p_y - hy, e.p_x + hx, e.p_y + hy, dims)


def roi_pair_from_ellipses(
    iris_e: Ellipse,
    sclera_e: Ellipse,
    dims: tuple[int, int],
    margin: float = 0.2,
) -> RoiPair:
    """Ground-truth boxes around known image ellipses."""
    width, height = dims
    x_min, y_min, x_max, y_max = iris_e.bbox()
    if x_min < 0 or y_min < 0 or x_max > width - 1 or y_max > height - 1:
        raise OutOfViewError("iris ellipse extends outside the frame")
    return RoiPair(
        iris_roi=_inflated_ellipse_box(iris_e, margin, dims),
        sclera_roi=_inflated_ellipse_box(sclera_e, margin, dims),
        confidence=1.0,
    )


def oracle_roi(
    scene: EyeScene,
    cam: CameraIntrinsics,
    dims: tuple[int, int],
    margin: float = 0.2,
) -> RoiPair:
    """Exact boxes for a synthetic scene; raises if the eye is not in view."""
    try:
        iris_e = project_iris_ellipse(scene, cam)
        sclera_e = project_sclera_ellipse(scene, cam)
    except DegenerateProjectionError as exc:
        raise OutOfViewError(str(exc)) from exc
    return roi_pair_from_ellipses(iris_e, sclera_e, dims, margin)


def write_sidecar_boxes(pair: RoiPair, dims: tuple[int, int], path) -> None:
    """One normalized `cls cx cy w h` record per region, 6 decimals."""
    width, height = dims
    lines = []
    for cls, roi in ((IRIS_CLASS, pair.iris_roi), (SCLERA_CLASS, pair.sclera_roi)):
        cx = (roi.x0 + roi.w / 2.0) / width
        cy = (roi.y0 + roi.h / 2.0) / height
        lines.append(
            f"{cls} {cx:.6f} {cy:.6f} {roi.w / width:.6f} {roi.h / height:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_sidecar_boxes(path, dims: tuple[int, int]) -> RoiPair:
    """Parse a detector box file back into pixel ROIs.

    Requires exactly one iris (class 0) and one sclera (class 1) record;
    every parse failure names the offending line.
    """
    width, height = dims
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SidecarParseError(f"cannot read box file {path}: {exc}") from exc
    boxes: dict[int, Roi] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise SidecarParseError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            cls = int(parts[0])
            cx, cy, w, h = (float(v) for v in parts[1:])
        except ValueError as exc:
            raise SidecarParseError(f"line {lineno}: non-numeric field") from exc
        if cls not in (IRIS_CLASS, SCLERA_CLASS):
            raise SidecarParseError(f"line {lineno}: unknown class {cls}")
        if cls in boxes:
            raise SidecarParseError(f"line {lineno}: duplicate class-{cls} record")
        for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
            if not 0.0 <= v <= 1.0:
                raise SidecarParseError(
                    f"line {lineno}: {name}={v} outside the normalized range [0, 1]"
                )
        x0 = round((cx - w / 2.0) * width)
        y0 = round((cy - h / 2.0) * height)
        boxes[cls] = _clamped_roi(
            x0, y0, x0 + round(w * width), y0 + round(h * height), dims
        )
    for cls, name in ((IRIS_CLASS, "iris"), (SCLERA_CLASS, "sclera")):
        if cls not in boxes:
            raise SidecarParseError(f"missing {name} (class {cls}) record")
    return RoiPair(
        iris_roi=boxes[IRIS_CLASS], sclera_roi=boxes[SCLERA_CLASS], confidence=1.0
    )


def intensity_roi(img: GrayImage, k: float = 0.7) -> RoiPair:
    """Classical detector: box the largest dark blob in the frame.

    The sclera box is the iris box inflated 3x about its center; the
    confidence is how well the blob fills its own bounding box.
    """
    if img.width < 64 or img.height < 64:
        raise ValueError("intensity detection needs at least a 64x64 frame")
    mask = adaptive_threshold(img, Roi(0, 0, img.width, img.height), k)
    components = connected_dark_components(mask)
    components = [c for c in components if len(c) >= 50]
    if not components:
        raise DetectionFailureError("no dark component of at least 50 pixels")
    blob = max(components, key=len)
    x_lo, y_lo = blob.min(axis=0)
    x_hi, y_hi = blob.max(axis=0)
    cx, cy = (x_lo + x_hi) / 2.0, (y_lo + y_hi) / 2.0
    hx, hy = (x_hi - x_lo + 1) / 2.0, (y_hi - y_lo + 1) / 2.0
    dims = (img.width, img.height)
    iris_roi = _clamped_roi(cx - 1.2 * hx, cy - 1.2 * hy, cx + 1.2 * hx, cy + 1.2 * hy, dims)
    sclera_roi = _clamped_roi(cx - 3 * hx, cy - 3 * hy, cx + 3 * hx, cy + 3 * hy, dims)
    fill = len(blob) / max((2 * hx) * (2 * hy), 1.0)
    return RoiPair(
        iris_roi=iris_roi, sclera_roi=sclera_roi, confidence=min(fill, 1.0)
    )


def sclera_center(
    pair: RoiPair, img: Optional[GrayImage] = None, mode: str = "box", k: float = 0.7
) -> np.ndarray:
    """Pixel center of the sclera region.

    mode="box" (default) is the box center; mode="bright" is the
    centroid of the bright pixels inside the sclera box, falling back to
    the box center when there are none.
    """
    if mode == "box":
        return np.array(pair.sclera_roi.center)
    if mode != "bright":
        raise ValueError("mode must be 'box' or 'bright'")
    if img is None:
        raise ValueError("mode='bright' needs the frame")
    roi = pair.sclera_roi
    mask = adaptive_threshold(img, roi, k)
    ys, xs = np.nonzero(~mask.bits)
    if len(xs) == 0:
        return np.array(roi.center)
    return np.array([roi.x0 + xs.mean(), roi.y0 + ys.mean()])


def make_roi_provider(kind: str, margin: float = 0.2, k: float = 0.7) -> RoiProvider:
    """Factory for the three provider kinds: oracle, sidecar, intensity."""
    if kind == "oracle":

        def provider(img: GrayImage, meta: Optional[dict]) -> RoiPair:
            if not meta or "iris_ellipse" not in meta or "sclera_ellipse" not in meta:
                raise OutOfViewError("oracle provider needs ground-truth metadata")
            return roi_pair_from_ellipses(
                ellipse_from_dict(meta["iris_ellipse"]),
                ellipse_from_dict(meta["sclera_ellipse"]),
                (img.width, img.height),
                margin,
            )

    elif kind == "sidecar":

        def provider(img: GrayImage, meta: Optional[dict]) -> RoiPair:
            if not meta or "boxes" not in meta:
                raise SidecarParseError("sidecar provider needs a 'boxes' path")
            return load_sidecar_boxes(meta["boxes"], (img.width, img.height))

    elif kind == "intensity":

        def provider(img: GrayImage, meta: Optional[dict]) -> RoiPair:
            return intensity_roi(img, k=k)

    else:
        raise ValueError(f"unknown ROI provider kind: {kind!r}")
    return provider
