"""Region-scoped binarization, border extraction and convex hulls.

Converts a raw frame plus an iris ROI into candidate boundary points.
All pixel coordinates are (x, y) with the origin at the top-left corner,
x growing right and y growing down.  Masks and the point lists derived
from them are ROI-local; callers add the ROI offset before fitting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DegenerateGeometryError, RoiBoundsError

# (N, 2) float64 array of (x, y) pixel coordinates.
PixelPointList = np.ndarray


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale raster, row-major."""

    width: int
    height: int
    pixels: np.ndarray  # uint8, shape (height, width)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.pixels.shape != (self.height, self.width):
            raise ValueError("pixel buffer does not match width/height")
        if self.pixels.dtype != np.uint8:
            raise ValueError("pixel buffer must be uint8")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "GrayImage":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)


@dataclass(frozen=True)
class Roi:
    """Axis-aligned region, top-left inclusive."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 8 or self.h < 8:
            raise ValueError("ROI must be at least 8x8 pixels")

    def contained_in(self, img: GrayImage) -> bool:
        return (
            self.x0 >= 0
            and self.y0 >= 0
            and self.x0 + self.w <= img.width
            and self.y0 + self.h <= img.height
        )

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.w / 2.0, self.y0 + self.h / 2.0)


@dataclass(frozen=True)
class BinaryMask:
    """Boolean raster over an ROI; True marks the dark (iris) class."""

    width: int
    height: int
    bits: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        if self.bits.shape != (self.height, self.width):
            raise ValueError("bit buffer does not match width/height")


def load_image(path) -> GrayImage:
    """Read a PNG or binary PGM frame as 8-bit grayscale.

    Color inputs are reduced with luma = round(0.299 R + 0.587 G + 0.114 B).
    """
    with Image.open(path) as im:
        if im.mode in ("L",):
            arr = np.asarray(im, dtype=np.uint8)
        elif im.mode in ("I;16", "I"):
            arr = (np.asarray(im, dtype=np.float64) / 257.0).round().astype(np.uint8)
        else:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
            arr = np.clip(np.round(luma), 0, 255).astype(np.uint8)
    return GrayImage.from_array(arr)


def save_image(img: GrayImage, path) -> None:
    Image.fromarray(img.pixels, mode="L").save(path)


def adaptive_threshold(img: GrayImage, roi: Roi, k: float) -> BinaryMask:
    """Binarize an ROI with the brightness-tracking threshold thd = avg * k.

    The mean is taken over the whole ROI in real arithmetic and the
    threshold is not rounded before comparison; a pixel is marked dark
    iff its intensity is strictly below thd.
    """
    if not 0.0 < k < 1.0:
        raise ValueError("scale factor k must satisfy 0 < k < 1")
    if not roi.contained_in(img):
        raise RoiBoundsError(f"ROI {roi} outside {img.width}x{img.height} image")
    view = img.pixels[roi.y0 : roi.y0 + roi.h, roi.x0 : roi.x0 + roi.w]
    thd = float(view.mean()) * k
    return BinaryMask(width=roi.w, height=roi.h, bits=view < thd)


def fixed_threshold(img: GrayImage, roi: Roi, thd: float) -> BinaryMask:
    """Plain fixed-cutoff binarization (ablation baseline)."""
    if not roi.contained_in(img):
        raise RoiBoundsError(f"ROI {roi} outside {img.width}x{img.height} image")
    view = img.pixels[roi.y0 : roi.y0 + roi.h, roi.x0 : roi.x0 + roi.w]
    return BinaryMask(width=roi.w, height=roi.h, bits=view < thd)


def extract_border_points(mask: BinaryMask) -> PixelPointList:
    """Dark pixels with at least one non-dark 4-neighbor.

    The mask border counts as non-dark.  Points come back in raster
    order, so the output is deterministic for a given mask.
    """
    bits = mask.bits
    padded = np.zeros((mask.height + 2, mask.width + 2), dtype=bool)
    padded[1:-1, 1:-1] = bits
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    border = bits & ~interior
    ys, xs = np.nonzero(border)
    return np.column_stack([xs, ys]).astype(np.float64)


def connected_dark_components(mask: BinaryMask) -> list[PixelPointList]:
    """4-connected components of dark pixels.

    Components are ordered by their raster-first (top-most, then
    left-most) pixel.  An empty mask yields an empty list.
    """
    labels, count = ndimage.label(mask.bits, structure=[[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    out = []
    for lab in range(1, count + 1):
        ys, xs = np.nonzero(labels == lab)
        out.append(np.column_stack([xs, ys]).astype(np.float64))
    return out


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: PixelPointList) -> PixelPointList:
    """Monotone-chain convex hull, counter-clockwise, no collinear runs."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        raise DegenerateGeometryError("convex hull needs at least 3 points")
    uniq = np.unique(pts, axis=0)
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    P = uniq[order]

    def half(iterable):
        chain: list[np.ndarray] = []
        for p in iterable:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(P)
    upper = half(P[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometryError("points are collinear")
    return np.array(hull)


def hull_area(hull: PixelPointList) -> float:
    """Shoelace area of a hull's vertex polygon."""
    x, y = hull[:, 0], hull[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def select_iris_hull(mask: BinaryMask) -> PixelPointList:
    """Hull each dark component's border and keep the largest hull by area.

    Ties break by larger component pixel count, then by component order.
    Raises DegenerateGeometryError when no component yields a hull.
    """
    labels, count = ndimage.label(mask.bits, structure=[[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    if count == 0:
        raise DegenerateGeometryError("mask has no dark component")
    border = extract_border_points(mask)
    if len(border) == 0:
        raise DegenerateGeometryError("mask has no border points")
    border_labels = labels[border[:, 1].astype(int), border[:, 0].astype(int)]
    sizes = ndimage.sum_labels(mask.bits, labels, index=np.arange(1, count + 1))

    best = None
    best_key = None
    for lab in range(1, count + 1):
        pts = border[border_labels == lab]
        try:
            hull = convex_hull(pts)
        except DegenerateGeometryError:
            continue
        key = (hull_area(hull), sizes[lab - 1], -lab)
        if best_key is None or key > best_key:
            best, best_key = hull, key
    if best is None:
        raise DegenerateGeometryError("no component produced a non-degenerate hull")
    return best
