"""
src/glands.py - Meibomian gland segmentation, connected-gland detection and fragmentation.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.config import GlandParams
from src.errors import EmptyRoi, FragmentationDiverged
from src.imgproc import (
    BinaryMask,
    GrayImage,
    StructuringElement,
    binary_median,
    erode,
    fill_holes,
    gradient_in,
    gradient_out,
    label_components,
    remove_small,
    skeletonize,
    threshold,
)
from src.roi import RoiResult, enhance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentCounts:
    n_h: int
    n_v: int


@dataclass
class Gland:
    label: int
    mask: BinaryMask
    area: int
    # (left, top, right, bottom), inclusive
    bbox: tuple[int, int, int, int]
    centroid: tuple[float, float]
    angle: float


@dataclass
class GlandSet:
    gland_signal: BinaryMask
    glands: list[Gland]
    n_signal_components: int = 0

    def label_image(self) -> np.ndarray:
        labels = np.zeros(self.gland_signal.shape, dtype=np.int32)
        for gland in self.glands:
            labels[gland.mask] = gland.label
        return labels


def segment_gland_signal(img: GrayImage, roi: RoiResult, params: Optional[GlandParams] = None) -> BinaryMask:
    """
    All gland signal I_GL inside the ROI.

    Raises:
        EmptyRoi: the ROI mask has no foreground.
    """
    params = params or GlandParams()
    if roi.area == 0 or not roi.roi_mask.any():
        raise EmptyRoi("gland segmentation needs a non-empty ROI")

    enhanced = enhance(img, params.median_diameter, params.highlight_size, params.laplacian_size,
                       params.normalized_laplacian)
    # histogram of ROI pixels only
    binary = threshold(enhanced, "otsu", mask=roi.roi_mask) & roi.roi_mask
    binary = binary_median(binary, StructuringElement.disk(params.binary_median_diameter)) & roi.roi_mask

    return keep_upright(binary, params)


def keep_upright(mask: BinaryMask, params: Optional[GlandParams] = None) -> BinaryMask:
    """Components whose principal axis lies within [min_angle, max_angle]."""
    params = params or GlandParams()
    comps = label_components(mask, 8)
    upright = (comps.angles >= params.min_angle) & (comps.angles <= params.max_angle)
    logger.debug(f"Gland signal: {comps.count} components, {int(upright.sum())} within the angle window")
    return comps.select(upright)


def count_segments(component: BinaryMask) -> SegmentCounts:
    """Maximal foreground runs summed over rows (n_h) and over columns (n_v)."""
    m = component.astype(np.int8)
    n_h = int(np.count_nonzero(np.diff(np.pad(m, ((0, 0), (1, 0))), axis=1) == 1))
    n_v = int(np.count_nonzero(np.diff(np.pad(m, ((1, 0), (0, 0))), axis=0) == 1))
    return SegmentCounts(n_h=n_h, n_v=n_v)


def is_connected_gland(counts: SegmentCounts, params: Optional[GlandParams] = None) -> bool:
    params = params or GlandParams()
    return counts.n_h > params.max_horizontal_segments or counts.n_v > params.max_vertical_segments


def _local_canvas(mask: BinaryMask, pad: int):
    """Copy of the mask's bounding box inside a zero frame of `pad` pixels, plus its placement."""
    ys, xs = np.nonzero(mask)
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    canvas = np.zeros((y1 - y0 + 2 * pad, x1 - x0 + 2 * pad), dtype=bool)
    canvas[pad:-pad, pad:-pad] = mask[y0:y1, x0:x1]
    return canvas, (y0 - pad, x0 - pad)


def _paste(shape, local: BinaryMask, origin) -> BinaryMask:
    out = np.zeros(shape, dtype=bool)
    oy, ox = origin
    h, w = shape
    lh, lw = local.shape
    sy0, sx0 = max(0, -oy), max(0, -ox)
    dy0, dx0 = max(0, oy), max(0, ox)
    dy1, dx1 = min(h, oy + lh), min(w, ox + lw)
    out[dy0:dy1, dx0:dx1] = local[sy0:sy0 + dy1 - dy0, sx0:sx0 + dx1 - dx0]
    return out


def _cut(piece: BinaryMask, eroded: BinaryMask, min_area: int) -> list[BinaryMask]:
    """Subtract the skeleton of the inverted eroded image from the piece; 4-connected parts."""
    skeleton = skeletonize(~eroded)
    separated = piece & ~skeleton
    comps = label_components(separated, 4)
    return [comps.labels == label for label in range(1, comps.count + 1) if comps.areas[label - 1] >= min_area]


def _split_once(piece: BinaryMask, params: GlandParams) -> Optional[tuple[list[BinaryMask], int]]:
    """
    Erode until the piece falls apart, then cut it along the background skeleton.

    The 1x3 element is tried first; the transposed element handles glands
    fused side by side. Returns (parts, iterations) or None when erosion
    empties the piece without a usable split.
    """
    elements = [
        StructuringElement.rectangle(params.fragment_se_width, params.fragment_se_height),
        StructuringElement.rectangle(params.fragment_se_height, params.fragment_se_width),
    ]
    for se in elements:
        canvas, (oy, ox) = _local_canvas(piece, 1)
        eroded = canvas
        for iteration in range(1, params.max_fragment_iterations + 1):
            eroded = erode(eroded, se)
            if not eroded.any():
                break
            if label_components(eroded, 8).count > 1:
                # frame wider than the eroded rim keeps the outer skeleton outside the piece
                frame = iteration * (max(se.width, se.height) // 2) + 4
                parts = _cut(np.pad(canvas, frame), np.pad(eroded, frame), params.min_gland_area)
                if len(parts) >= 2:
                    return [_paste(piece.shape, p, (oy - frame, ox - frame)) for p in parts], iteration
        if se.width == se.height:
            break
    return None


def repair(piece: BinaryMask, params: Optional[GlandParams] = None) -> BinaryMask:
    """Close skeleton cuts: gradient-out, fill holes, then remove the inner contour."""
    params = params or GlandParams()
    disk = StructuringElement.disk(params.repair_diameter)
    canvas, origin = _local_canvas(piece, params.repair_diameter + 2)
    expanded = fill_holes(gradient_out(canvas, disk))
    repaired = expanded & ~gradient_in(expanded, disk)
    return _paste(piece.shape, repaired, origin)


def fragment(connected: BinaryMask, params: Optional[GlandParams] = None, strict: bool = False) -> list[BinaryMask]:
    """
    Separate glands fused into one component.

    Returns:
        Pairwise disjoint, single-component gland masks. When nothing can be
        separated the input is returned unsplit (logged as a warning).

    Raises:
        FragmentationDiverged: only when strict and no split was possible.
    """
    params = params or GlandParams()
    pending = [connected]
    separated: list[BinaryMask] = []
    rounds = 0
    while pending:
        piece = pending.pop(0)
        result = _split_once(piece, params) if rounds < params.max_fragment_iterations else None
        if result is None:
            if rounds == 0:
                if strict:
                    raise FragmentationDiverged("erosion emptied the connected gland before it split")
                logger.warning("Fragmentation diverged; keeping the connected gland unsplit")
                return [connected.copy()]
            separated.append(piece)
            continue
        parts, iterations = result
        rounds += 1
        logger.debug(f"Fragmentation round {rounds}: {len(parts)} parts after {iterations} erosions")
        for part in parts:
            if is_connected_gland(count_segments(part), params):
                pending.append(part)
            else:
                separated.append(part)

    glands: list[BinaryMask] = []
    claimed = np.zeros(connected.shape, dtype=bool)
    for part in separated:
        fixed = repair(part, params) & ~claimed
        comps = label_components(fixed, 8)
        if comps.count == 0:
            continue
        fixed = comps.labels == comps.largest()
        claimed |= fixed
        glands.append(fixed)
    return glands


def _sort_key(gland_mask: BinaryMask):
    comps = label_components(gland_mask, 8)
    cx, cy = comps.centroids[0]
    return (float(cx), float(cy), int(comps.bboxes[0][0]))


def extract_glands(gland_signal: BinaryMask, params: Optional[GlandParams] = None) -> GlandSet:
    """Intact glands: drop small objects, split connected glands, label left to right."""
    params = params or GlandParams()
    all_signal = label_components(gland_signal, 8)
    large = remove_small(gland_signal, params.min_gland_area)
    comps = label_components(large, 8)

    masks: list[BinaryMask] = []
    for label in range(1, comps.count + 1):
        component = comps.labels == label
        if is_connected_gland(count_segments(component), params):
            masks.extend(fragment(component, params))
        else:
            masks.append(component)

    glands: list[Gland] = []
    masks = [m for m in masks if np.count_nonzero(m) >= params.min_gland_area]
    for index, mask in enumerate(sorted(masks, key=_sort_key), start=1):
        stats = label_components(mask, 8)
        left, top, right, bottom = (int(v) for v in stats.bboxes[0])
        glands.append(Gland(
            label=index,
            mask=mask,
            area=int(stats.areas[0]),
            bbox=(left, top, right, bottom),
            centroid=(float(stats.centroids[0][0]), float(stats.centroids[0][1])),
            angle=float(stats.angles[0]),
        ))
    logger.debug(f"Glands: {len(glands)} intact of {all_signal.count} signal components")
    return GlandSet(gland_signal=gland_signal, glands=glands, n_signal_components=all_signal.count)
