"""
src/roi.py - Tarsal-conjunctiva (ROI) segmentation.

Pipeline: reflection/eyelash mask -> masked pixels replaced by their local
mean -> contrast enhancement -> inverted nested-Otsu binarization -> speckle
removal -> border rejection -> gradient-out + convex hull -> largest block ->
column scans -> B-spline upper/lower boundaries -> region between the
boundaries.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.bspline import BSplineCurve, fit_bspline
from src.config import RoiParams
from src.errors import DegenerateHistogram, ImageTooSmall, NoEyelidDetected
from src.imgproc import (
    BinaryMask,
    GrayImage,
    StructuringElement,
    convex_hull,
    count_foreground,
    dilate,
    erode,
    fill_masked,
    gradient_out,
    highlight_details,
    invert,
    keep_largest,
    laplacian_sharpen,
    median_filter,
    nested_otsu_level,
    prewitt,
    reject_border,
    remove_small,
    subtract,
    threshold,
)

logger = logging.getLogger(__name__)

TRACE_STAGES = ("I_M", "I_GM", "I_HD", "I_BI", "I_BIM", "I_RSO", "I_CH", "I_CF")


@dataclass
class RoiTrace:
    """Intermediate rasters of one segment_roi run, keyed by stage name."""

    stages: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, raster: np.ndarray) -> None:
        self.stages[name] = raster.copy()


@dataclass
class RoiResult:
    roi_mask: BinaryMask
    upper_boundary: BSplineCurve
    lower_boundary: BSplineCurve
    area: int
    trace: Optional[RoiTrace] = None


def build_reflection_mask(img: GrayImage, params: Optional[RoiParams] = None) -> BinaryMask:
    """Mask I_M of eyelash, specular-highlight and strong-edge regions (Otsu on the Prewitt response)."""
    params = params or RoiParams()
    smoothed = median_filter(img, StructuringElement.disk(params.median_diameter))
    strong = threshold(prewitt(smoothed), "otsu")
    return dilate(strong, StructuringElement.disk(params.reflection_dilate_diameter))


def enhance(
    img: GrayImage,
    median_diameter: int,
    highlight_size: int,
    laplacian_size: int,
    normalized: bool = True,
) -> GrayImage:
    """Median denoise, highlight details, Laplacian sharpen (shared with gland segmentation)."""
    smoothed = median_filter(img, StructuringElement.disk(median_diameter))
    detailed = highlight_details(smoothed, highlight_size)
    return laplacian_sharpen(detailed, laplacian_size, normalized=normalized)


def _binarize(img: GrayImage, depth: int) -> BinaryMask:
    """Pixels above the nested Otsu level of the given depth; empty on a flat image."""
    try:
        level = nested_otsu_level(img, depth)
    except DegenerateHistogram:
        logger.warning("Degenerate histogram under Otsu; returning empty mask")
        return np.zeros(img.shape, dtype=bool)
    return threshold(img, level)


def scan_boundaries(block: BinaryMask) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    First background->foreground transition of every column, top-down and bottom-up.

    Returns:
        (columns, upper_rows, lower_rows) for the columns holding foreground.
    """
    h = block.shape[0]
    columns = np.nonzero(block.any(axis=0))[0]
    upper = np.argmax(block[:, columns], axis=0)
    lower = h - 1 - np.argmax(block[::-1, columns], axis=0)
    return columns, upper, lower


def _curve_rows(curve: BSplineCurve, columns: np.ndarray) -> np.ndarray:
    """Row of the curve at each column (curve densely sampled, then interpolated in x)."""
    samples = curve.sample(max(4 * len(columns), 64))
    order = np.argsort(samples[:, 0], kind="stable")
    return np.interp(columns, samples[order, 0], samples[order, 1])


def region_between(shape, upper: BSplineCurve, lower: BSplineCurve, x_min: int, x_max: int) -> BinaryMask:
    """Closed area between two boundary curves over columns x_min..x_max."""
    h, w = shape
    columns = np.arange(x_min, x_max + 1)
    top = np.floor(_curve_rows(upper, columns) + 0.5).astype(np.int64)
    bottom = np.floor(_curve_rows(lower, columns) + 0.5).astype(np.int64)
    top = np.clip(top, 0, h - 1)
    bottom = np.clip(bottom, 0, h - 1)
    top, bottom = np.minimum(top, bottom), np.maximum(top, bottom)

    rows = np.arange(h)[:, None]
    out = np.zeros(shape, dtype=bool)
    out[:, x_min:x_max + 1] = (rows >= top[None, :]) & (rows <= bottom[None, :])
    return out


def segment_roi(img: GrayImage, params: Optional[RoiParams] = None, trace: bool = False) -> RoiResult:
    """
    Segment the tarsal conjunctiva.

    Args:
        img: GrayImage of at least params.min_size in both dimensions
        params: RoiParams (published defaults when omitted)
        trace: keep every intermediate raster in the result

    Raises:
        ImageTooSmall: image below the minimum size.
        NoEyelidDetected: nothing survives border rejection, or the final
            block covers less than params.min_area_fraction of the image.
    """
    params = params or RoiParams()
    h, w = img.shape
    if h < params.min_size or w < params.min_size:
        raise ImageTooSmall(f"ROI segmentation needs at least {params.min_size}x{params.min_size}, got {w}x{h}")

    steps = RoiTrace() if trace else None

    def keep(name: str, raster: np.ndarray) -> None:
        if steps is not None:
            steps.add(name, raster)

    i_m = build_reflection_mask(img, params)
    keep("I_M", i_m)
    i_gm = fill_masked(img, i_m, params.fill_size)
    keep("I_GM", i_gm)
    i_hd = enhance(i_gm, params.median_diameter, params.highlight_size, params.laplacian_size,
                   params.normalized_laplacian)
    keep("I_HD", i_hd)
    i_bi = invert(_binarize(i_hd, params.otsu_depth))
    keep("I_BI", i_bi)
    i_bim = subtract(i_bi, i_m)
    keep("I_BIM", i_bim)

    box = StructuringElement.rectangle(params.open_size, params.open_size)
    cleaned = erode(i_bim, box)
    cleaned = remove_small(cleaned, params.min_block_area)
    cleaned = dilate(cleaned, box)
    i_rso = reject_border(cleaned)
    keep("I_RSO", i_rso)
    if not i_rso.any():
        raise NoEyelidDetected("no eyelid signal left after border rejection")

    ring = gradient_out(i_rso, StructuringElement.disk(params.gradient_out_diameter))
    i_ch = convex_hull(ring)
    keep("I_CH", i_ch)

    block = StructuringElement.rectangle(params.cf_size, params.cf_size)
    i_cf = dilate(keep_largest(erode(i_ch, block)), block)
    keep("I_CF", i_cf)
    block_area = count_foreground(i_cf)
    if block_area < params.min_area_fraction * h * w:
        raise NoEyelidDetected(
            f"largest eyelid block covers {block_area} px, below {params.min_area_fraction:.0%} of the image"
        )

    columns, upper_rows, lower_rows = scan_boundaries(i_cf)
    upper = fit_bspline(np.column_stack([columns, upper_rows]), degree=2)
    lower = fit_bspline(np.column_stack([columns, lower_rows]), degree=2)

    roi_mask = keep_largest(region_between(img.shape, upper, lower, int(columns[0]), int(columns[-1])))
    area = count_foreground(roi_mask)
    logger.debug(f"ROI: {len(columns)} scan columns, area {area} px")
    return RoiResult(roi_mask=roi_mask, upper_boundary=upper, lower_boundary=lower, area=area, trace=steps)
