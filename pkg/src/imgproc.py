"""
src/imgproc.py - Raster primitives shared by every pipeline stage.

Images are numpy arrays indexed [row, column]:
- GrayImage: uint8, shape (height, width)
- BinaryMask: bool, shape (height, width)

Filters replicate edge pixels (ndimage mode "nearest"); binary morphology
treats everything outside the raster as background. All functions are pure
and deterministic.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Literal, Optional, Union

import numpy as np
from scipy import ndimage

from src.errors import (
    DegenerateHistogram,
    DimensionMismatch,
    EmptyMask,
    ImageTooSmall,
    InvalidKernelSize,
)

logger = logging.getLogger(__name__)

GrayImage = np.ndarray
BinaryMask = np.ndarray


@dataclass(frozen=True)
class StructuringElement:
    """Disk or rectangle footprint; origin at (height // 2, width // 2)."""

    shape: Literal["disk", "rectangle"]
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidKernelSize(f"structuring element must be at least 1x1, got {self.width}x{self.height}")
        if self.shape == "disk" and self.width != self.height:
            raise InvalidKernelSize("disk elements need width == height")

    @classmethod
    def disk(cls, diameter: int) -> "StructuringElement":
        return cls("disk", diameter, diameter)

    @classmethod
    def rectangle(cls, width: int, height: int) -> "StructuringElement":
        return cls("rectangle", width, height)

    @cached_property
    def footprint(self) -> np.ndarray:
        if self.shape == "rectangle":
            return np.ones((self.height, self.width), dtype=bool)
        center = (self.width - 1) / 2.0
        rows, cols = np.mgrid[0:self.height, 0:self.width]
        radius = self.width / 2.0
        return (rows - center) ** 2 + (cols - center) ** 2 <= radius ** 2

    @cached_property
    def offsets(self) -> list[tuple[int, int]]:
        """(dy, dx) of every footprint member relative to the origin."""
        oy, ox = self.height // 2, self.width // 2
        ys, xs = np.nonzero(self.footprint)
        return [(int(y - oy), int(x - ox)) for y, x in zip(ys, xs)]

    @property
    def size(self) -> int:
        return len(self.offsets)


@dataclass
class ComponentSet:
    """Connected components of a mask with per-component statistics."""

    labels: np.ndarray
    count: int
    areas: np.ndarray = field(repr=False)
    # (left, top, right, bottom), inclusive
    bboxes: np.ndarray = field(repr=False)
    # (x, y)
    centroids: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)
    touches_border: np.ndarray = field(repr=False)

    def mask(self, label: int) -> BinaryMask:
        return self.labels == label

    def select(self, keep: np.ndarray) -> BinaryMask:
        """Mask of the components whose entry in the boolean `keep` (length count) is set."""
        lut = np.concatenate(([False], np.asarray(keep, dtype=bool)))
        return lut[self.labels]

    def largest(self) -> int:
        """Label of the largest component (lowest label on ties); 0 when empty."""
        if self.count == 0:
            return 0
        return int(np.argmax(self.areas)) + 1


# ---------------------------------------------------------------------------
# helpers

def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} does not match {b.shape}")


def _as_uint8(values: np.ndarray) -> GrayImage:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def box_sum(img: np.ndarray, size: int) -> np.ndarray:
    """Sum over a size x size window with edge replication, via an integral image."""
    r = size // 2
    padded = np.pad(img.astype(np.int64), r, mode="edge")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    h, w = img.shape
    return (integral[size:size + h, size:size + w]
            - integral[0:h, size:size + w]
            - integral[size:size + h, 0:w]
            + integral[0:h, 0:w])


def _check_kernel_size(size: int) -> None:
    if size < 3 or size % 2 == 0:
        raise InvalidKernelSize(f"kernel size must be odd and >= 3, got {size}")


# ---------------------------------------------------------------------------
# grayscale filters

def prewitt(img: GrayImage) -> GrayImage:
    """|Gx| + |Gy| of the 3x3 Prewitt kernels, clamped to 0..255."""
    h, w = img.shape
    if h < 3 or w < 3:
        raise ImageTooSmall(f"prewitt needs at least 3x3, got {w}x{h}")
    signal = img.astype(np.int32)
    gx = ndimage.prewitt(signal, axis=1, mode="nearest")
    gy = ndimage.prewitt(signal, axis=0, mode="nearest")
    return np.minimum(np.abs(gx) + np.abs(gy), 255).astype(np.uint8)


def otsu_level(img: GrayImage, mask: Optional[BinaryMask] = None) -> int:
    """
    Otsu threshold over the 256-bin histogram.

    Ties between equally good thresholds resolve to the floor of their mean,
    i.e. the centre of the maximal plateau.

    Args:
        img: GrayImage
        mask: when given, only pixels under the mask enter the histogram

    Raises:
        DegenerateHistogram: when the counted pixels hold a single intensity.
    """
    if mask is not None:
        _check_same_shape(img, mask)
        values = img[mask]
    else:
        values = img.ravel()
    hist = np.bincount(values, minlength=256).astype(np.int64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogram("constant image has no inter-class variance")

    total = int(hist.sum())
    total_sum = int(np.dot(np.arange(256), hist))
    n0 = np.cumsum(hist)
    s0 = np.cumsum(np.arange(256) * hist)

    best = Fraction(-1)
    candidates: list[int] = []
    for t in range(255):
        a, b = int(n0[t]), total - int(n0[t])
        if a == 0 or b == 0:
            continue
        # proportional to w0 * w1 * (mu0 - mu1)^2
        score = Fraction((total * int(s0[t]) - a * total_sum) ** 2, a * b)
        if score > best:
            best = score
            candidates = [t]
        elif score == best:
            candidates.append(t)
    return sum(candidates) // len(candidates)


def nested_otsu_level(img: GrayImage, depth: int, mask: Optional[BinaryMask] = None) -> int:
    """
    Otsu level refined `depth - 1` times over the pixels above the previous level.

    depth 1 is plain Otsu. Refinement stops early once the upper class holds
    a single intensity.

    Raises:
        DegenerateHistogram: when the first level is undefined.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    region = np.ones(img.shape, dtype=bool) if mask is None else mask
    level = otsu_level(img, region)
    for _ in range(depth - 1):
        region = region & (img > level)
        try:
            level = otsu_level(img, region)
        except DegenerateHistogram:
            break
    return level


def threshold(
    img: GrayImage,
    method: Union[str, int] = "otsu",
    strict: bool = False,
    mask: Optional[BinaryMask] = None,
) -> BinaryMask:
    """
    Binarize: foreground = pixels strictly above the threshold.

    Args:
        img: GrayImage
        method: "otsu" or a fixed integer level
        strict: raise DegenerateHistogram instead of warning on constant images
        mask: restrict the Otsu histogram to these pixels; the whole image is
            still binarized
    """
    if method == "otsu":
        try:
            level = otsu_level(img, mask)
        except DegenerateHistogram:
            if strict:
                raise
            logger.warning("Degenerate histogram under Otsu; returning empty mask")
            return np.zeros(img.shape, dtype=bool)
    else:
        level = int(method)
    return img > level


def median_filter(img: GrayImage, se: StructuringElement) -> GrayImage:
    """Median under the footprint (lower median for even counts), edge replicated."""
    return ndimage.rank_filter(img, rank=(se.size - 1) // 2, footprint=se.footprint, mode="nearest")


def binary_median(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Median of a binary mask, i.e. a majority vote under the footprint."""
    votes = ndimage.rank_filter(mask.astype(np.uint8), rank=(se.size - 1) // 2, footprint=se.footprint,
                                mode="nearest")
    return votes.astype(bool)


def highlight_details(img: GrayImage, size: int, gain: float = 1.0) -> GrayImage:
    """High-boost sharpening: img + gain * (img - boxblur(img, size))."""
    _check_kernel_size(size)
    blur = box_sum(img, size) / float(size * size)
    base = img.astype(np.float64)
    return _as_uint8(base + gain * (base - blur))


def laplacian_sharpen(img: GrayImage, size: int, normalized: bool = False) -> GrayImage:
    """
    img + (size x size Laplacian: -1 everywhere, size^2 - 1 at the centre).

    With normalized=True the response is divided by size^2, which gives
    2 * img - boxblur(img, size).
    """
    _check_kernel_size(size)
    base = img.astype(np.int64)
    response = size * size * base - box_sum(img, size)
    if normalized:
        return _as_uint8(base + response / float(size * size))
    return np.clip(base + response, 0, 255).astype(np.uint8)


def subtract(a: np.ndarray, b: BinaryMask) -> np.ndarray:
    """Clear the pixels of `a` where `b` is set (background for masks, 0 for images)."""
    _check_same_shape(a, b)
    if a.dtype == bool:
        return a & ~b
    return np.where(b, 0, a).astype(a.dtype)


def fill_masked(img: GrayImage, mask: BinaryMask, size: int) -> GrayImage:
    """
    Replace masked pixels by the mean of the unmasked pixels in a size x size window.

    Windows without unmasked pixels take the mean of all unmasked pixels; a
    fully masked image comes back black.
    """
    _check_same_shape(img, mask)
    _check_kernel_size(size)
    keep = ~mask
    if not keep.any():
        return np.zeros(img.shape, dtype=np.uint8)
    counts = box_sum(keep.astype(np.int64), size)
    sums = box_sum(np.where(keep, img, 0).astype(np.int64), size)
    local = np.where(counts > 0, sums / np.maximum(counts, 1), float(img[keep].mean()))
    return np.where(mask, _as_uint8(local), img).astype(np.uint8)


def invert(mask: BinaryMask) -> BinaryMask:
    return ~mask


# ---------------------------------------------------------------------------
# binary morphology

def dilate(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Minkowski dilation: out[p] = OR over b in se of mask[p - b]."""
    return ndimage.binary_dilation(mask, structure=se.footprint)


def erode(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Minkowski erosion: out[p] = AND over b in se of mask[p + b]; outside is background."""
    return ndimage.binary_erosion(mask, structure=se.footprint, border_value=0)


def gradient_out(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Outer ring: dilate(mask) - mask."""
    return dilate(mask, se) & ~mask


def gradient_in(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Inner ring: mask - erode(mask)."""
    return mask & ~erode(mask, se)


# ---------------------------------------------------------------------------
# components

def label_components(mask: BinaryMask, connectivity: int = 8) -> ComponentSet:
    """
    Connected components with area, bbox, centroid, principal-axis angle and border flag.

    Labels are assigned 1..n in raster order of each component's first pixel.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = mask.shape
    structure = ndimage.generate_binary_structure(2, 2 if connectivity == 8 else 1)
    labels, count = ndimage.label(mask, structure=structure)
    labels = labels.astype(np.int32)
    if count == 0:
        return ComponentSet(
            labels=labels, count=0,
            areas=np.zeros(0, dtype=np.int64), bboxes=np.zeros((0, 4), dtype=np.int64),
            centroids=np.zeros((0, 2)), angles=np.zeros(0), touches_border=np.zeros(0, dtype=bool),
        )

    ys, xs = np.nonzero(labels)
    pixel_labels = labels[ys, xs]
    n = count + 1
    areas = np.bincount(pixel_labels, minlength=n).astype(np.int64)
    cx = np.bincount(pixel_labels, weights=xs, minlength=n)[1:] / areas[1:]
    cy = np.bincount(pixel_labels, weights=ys, minlength=n)[1:] / areas[1:]
    dx = xs - cx[pixel_labels - 1]
    dy = ys - cy[pixel_labels - 1]
    mu20 = np.bincount(pixel_labels, weights=dx * dx, minlength=n)[1:]
    mu02 = np.bincount(pixel_labels, weights=dy * dy, minlength=n)[1:]
    mu11 = np.bincount(pixel_labels, weights=dx * dy, minlength=n)[1:]
    # rows grow downwards; flip the sign of mu11 to measure angles counter-clockwise
    angles = np.degrees(0.5 * np.arctan2(-2.0 * mu11, mu20 - mu02)) % 180.0

    bboxes = np.array(
        [[s[1].start, s[0].start, s[1].stop - 1, s[0].stop - 1] for s in ndimage.find_objects(labels)],
        dtype=np.int64,
    )
    touches = (bboxes[:, 0] == 0) | (bboxes[:, 1] == 0) | (bboxes[:, 2] == w - 1) | (bboxes[:, 3] == h - 1)

    return ComponentSet(
        labels=labels, count=count, areas=areas[1:], bboxes=bboxes,
        centroids=np.stack([cx, cy], axis=1), angles=angles, touches_border=touches,
    )


def remove_small(mask: BinaryMask, min_area: int) -> BinaryMask:
    """Drop 8-connected components with fewer than min_area pixels."""
    if min_area < 1:
        raise ValueError(f"min_area must be >= 1, got {min_area}")
    comps = label_components(mask, 8)
    return comps.select(comps.areas >= min_area)


def reject_border(mask: BinaryMask) -> BinaryMask:
    """Drop 8-connected components touching the raster border."""
    comps = label_components(mask, 8)
    return comps.select(~comps.touches_border)


def keep_largest(mask: BinaryMask) -> BinaryMask:
    comps = label_components(mask, 8)
    if comps.count == 0:
        return mask.copy()
    return comps.labels == comps.largest()


def fill_holes(mask: BinaryMask) -> BinaryMask:
    """Background regions not 4-connected to the border become foreground."""
    return ndimage.binary_fill_holes(mask)


# ---------------------------------------------------------------------------
# thinning

def _zhang_suen_pass(img: np.ndarray, first: bool) -> np.ndarray:
    """One Zhang-Suen subiteration on a 0/1 uint8 array with a zero frame; returns removals."""
    c = img[1:-1, 1:-1]
    p2 = img[:-2, 1:-1]
    p3 = img[:-2, 2:]
    p4 = img[1:-1, 2:]
    p5 = img[2:, 2:]
    p6 = img[2:, 1:-1]
    p7 = img[2:, :-2]
    p8 = img[1:-1, :-2]
    p9 = img[:-2, :-2]
    ring = [p2, p3, p4, p5, p6, p7, p8, p9, p2]
    neighbours = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
    transitions = sum(((ring[k] == 0) & (ring[k + 1] == 1)).astype(np.uint8) for k in range(8))
    if first:
        side = (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        side = (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    return (c == 1) & (neighbours >= 2) & (neighbours <= 6) & (transitions == 1) & side


def skeletonize(mask: BinaryMask) -> BinaryMask:
    """Zhang-Suen two-subiteration thinning to an 8-connected 1-pixel skeleton."""
    out = np.zeros(mask.shape, dtype=bool)
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        return out
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    img = np.zeros((y1 - y0 + 2, x1 - x0 + 2), dtype=np.uint8)
    img[1:-1, 1:-1] = mask[y0:y1, x0:x1]
    while True:
        changed = False
        for first in (True, False):
            remove = _zhang_suen_pass(img, first)
            if remove.any():
                img[1:-1, 1:-1][remove] = 0
                changed = True
        if not changed:
            break
    out[y0:y1, x0:x1] = img[1:-1, 1:-1].astype(bool)
    return out


# ---------------------------------------------------------------------------
# convex hull

def _cross(o, a, b) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_vertices(points: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Graham scan (monotone-chain form) over integer (x, y) points; collinear points dropped."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower: list[tuple[int, int]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[int, int]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def rasterize_segment(out: BinaryMask, p0, p1) -> None:
    """Set the pixels of the digital segment p0 -> p1 ((x, y) pairs) in place."""
    (xa, ya), (xb, yb) = p0, p1
    n = int(max(abs(xb - xa), abs(yb - ya)))
    t = np.linspace(0.0, 1.0, n + 1)
    xs = np.floor(xa + t * (xb - xa) + 0.5).astype(np.int64)
    ys = np.floor(ya + t * (yb - ya) + 0.5).astype(np.int64)
    h, w = out.shape
    inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    out[ys[inside], xs[inside]] = True


def fill_polygon(shape, vertices: list[tuple[float, float]]) -> BinaryMask:
    """
    Filled convex polygon: every pixel centre inside or on the boundary.

    One or two vertices (a degenerate hull) give the digital segment between them.
    """
    out = np.zeros(shape, dtype=bool)
    if len(vertices) < 3:
        rasterize_segment(out, vertices[0], vertices[-1])
        return out

    v = np.asarray(vertices, dtype=np.float64)
    xa, ya = v[:, 0], v[:, 1]
    xb, yb = np.roll(xa, -1), np.roll(ya, -1)
    h, w = shape
    y_lo = max(int(np.ceil(ya.min())), 0)
    y_hi = min(int(np.floor(ya.max())), h - 1)
    for y in range(y_lo, y_hi + 1):
        lo_y, hi_y = np.minimum(ya, yb), np.maximum(ya, yb)
        hit = (lo_y <= y) & (y <= hi_y) & (ya != yb)
        if not hit.any():
            continue
        t = (y - ya[hit]) / (yb[hit] - ya[hit])
        xs = xa[hit] + t * (xb[hit] - xa[hit])
        left = max(int(np.ceil(xs.min() - 1e-9)), 0)
        right = min(int(np.floor(xs.max() + 1e-9)), w - 1)
        if left <= right:
            out[y, left:right + 1] = True
    return out


def _runs(mask: BinaryMask):
    """Horizontal foreground runs as (row, start, end) arrays, end exclusive, raster order."""
    h, w = mask.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = mask
    d = np.diff(padded, axis=1)
    rows, starts = np.nonzero(d == 1)
    _, ends = np.nonzero(d == -1)
    return rows, starts, ends


def convex_hull(mask: BinaryMask) -> BinaryMask:
    """Filled convex hull of the foreground pixels."""
    rows, starts, ends = _runs(mask)
    if len(rows) == 0:
        raise EmptyMask("convex hull of an empty mask")
    # leftmost and rightmost pixel of each row carry the whole hull
    points = list(zip(starts.tolist(), rows.tolist())) + list(zip((ends - 1).tolist(), rows.tolist()))
    return fill_polygon(mask.shape, hull_vertices(points))


def count_foreground(mask: BinaryMask) -> int:
    return int(np.count_nonzero(mask))
