"""
src/metrics.py - Per-gland geometry and per-image statistics.

GA  gland area ratio, percent of ROI pixels holding gland signal
L   gland length, R x centerline arc length
D   gland width, R x mean perpendicular chord
DI  deformation index, population SD of R x chord
TI  tortuosity index, (arc / chord) x mean |curvature| in 1/mm
SI  signal index, lg(mean gland grey / mean non-gland ROI grey)
"""
import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from src.bspline import fit_bspline
from src.config import GlandParams, MetricParams, RoiParams
from src.errors import (
    DegenerateChord,
    DegenerateGland,
    EmptyMask,
    EmptyRoi,
    NoValidSamples,
    ZeroBackground,
)
from src.glands import GlandSet, extract_glands, segment_gland_signal
from src.imgproc import BinaryMask, GrayImage, skeletonize
from src.roi import RoiResult, segment_roi

logger = logging.getLogger(__name__)

_NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass
class Centerline:
    """Ordered (x, y) points from endpoint M (upper) to endpoint N."""

    points: np.ndarray
    pixels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(self.points) < 2:
            raise DegenerateGland("a centerline needs at least two points")

    @property
    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    @property
    def chord_length(self) -> float:
        return float(np.linalg.norm(self.points[-1] - self.points[0]))


@dataclass
class WidthProfile:
    positions: np.ndarray
    arc_positions: np.ndarray
    widths: np.ndarray

    @property
    def n(self) -> int:
        return len(self.widths)


@dataclass
class GlandMetrics:
    label: int
    area: int
    length_mm: Optional[float] = None
    width_mm: Optional[float] = None
    deformation_mm: Optional[float] = None
    tortuosity: Optional[float] = None
    n_width_samples: int = 0
    flags: list[str] = field(default_factory=list)


@dataclass
class SignalIndex:
    si: float
    si_scaled: float
    grey_glands: float
    grey_background: float


METRIC_FIELDS = {
    "L": "length_mm",
    "D": "width_mm",
    "DI": "deformation_mm",
    "TI": "tortuosity",
}


@dataclass
class ImageReport:
    r_mm_per_px: float
    roi_area: int
    ga_percent: float
    si: Optional[float]
    si_scaled: Optional[float]
    glands: list[GlandMetrics]
    aggregates: dict[str, Optional[float]]
    n_signal_components: int = 0
    flags: list[str] = field(default_factory=list)
    roi: Optional[RoiResult] = field(default=None, repr=False)
    gland_set: Optional[GlandSet] = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# centerline

def _pixel_inside(mask: BinaryMask, x: float, y: float) -> Optional[bool]:
    """Foreground test of the pixel containing (x, y); None outside the raster."""
    col, row = math.floor(x + 0.5), math.floor(y + 0.5)
    h, w = mask.shape
    if row < 0 or row >= h or col < 0 or col >= w:
        return None
    return bool(mask[row, col])


def _ray_to_edge(mask: BinaryMask, origin: np.ndarray, direction: np.ndarray, step: float) -> Optional[float]:
    """
    Distance from origin along direction to the gland edge.

    The edge sits halfway between the last foreground and the first background
    march step. Returns None when the ray leaves the raster first.
    """
    t = 0.0
    limit = float(sum(mask.shape))
    while t <= limit:
        inside = _pixel_inside(mask, origin[0] + t * direction[0], origin[1] + t * direction[1])
        if inside is None:
            return None
        if not inside:
            return max(t - step / 2.0, 0.0)
        t += step
    return None


def _longest_path(skeleton: BinaryMask) -> list[tuple[int, int]]:
    """Longest endpoint-to-endpoint path (8-adjacency, unit/sqrt2 steps) by a double Dijkstra sweep."""
    ys, xs = np.nonzero(skeleton)
    nodes = set(zip(ys.tolist(), xs.tolist()))

    def neighbours(node):
        y, x = node
        for dy, dx in _NEIGHBOURS:
            other = (y + dy, x + dx)
            if other in nodes:
                yield other, math.sqrt(2.0) if dy and dx else 1.0

    def farthest(source):
        dist = {source: 0.0}
        prev = {source: None}
        heap = [(0.0, source)]
        while heap:
            d, node = heapq.heappop(heap)
            if d > dist[node]:
                continue
            for other, weight in neighbours(node):
                nd = d + weight
                if nd < dist.get(other, math.inf) - 1e-12:
                    dist[other] = nd
                    prev[other] = node
                    heapq.heappush(heap, (nd, other))
        # ties resolve to the smallest (row, col) for determinism
        end = min(dist, key=lambda n: (-dist[n], n))
        return end, prev

    start = min(nodes)
    end_a, _ = farthest(start)
    end_b, prev = farthest(end_a)
    path = []
    node = end_b
    while node is not None:
        path.append(node)
        node = prev[node]
    return path


def smooth_points(points: np.ndarray, window: int = 5) -> np.ndarray:
    """Moving average with a symmetric window truncated at the ends (lines stay exact)."""
    n = len(points)
    half = np.minimum(np.minimum(np.arange(n), n - 1 - np.arange(n)), window // 2)
    csum = np.vstack([np.zeros((1, 2)), np.cumsum(points, axis=0)])
    idx = np.arange(n)
    return (csum[idx + half + 1] - csum[idx - half]) / (2 * half + 1)[:, None]


def _extension(mask: BinaryMask, end: np.ndarray, inner: np.ndarray, step: float) -> list[np.ndarray]:
    """Unit-spaced points from a path end outward along its end tangent, up to the edge."""
    direction = end - inner
    norm = np.linalg.norm(direction)
    if norm == 0:
        return []
    direction = direction / norm
    reach = _ray_to_edge(mask, end, direction, step)
    if not reach:
        return []
    steps = [end + k * direction for k in range(1, int(math.floor(reach)) + 1) if k < reach]
    return steps + [end + reach * direction]


def _trim_spurs(pixels: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """
    Drop the end stretches of a skeleton path that run into the corners of a blunt tip.

    Each end loses sqrt(2) * r + 1 pixels of arc, r being the largest inscribed
    radius within three median radii of that end. Paths too short to trim come
    back unchanged.
    """
    seg = np.linalg.norm(np.diff(pixels, axis=0), axis=1)
    arc = np.concatenate(([0.0], np.cumsum(seg)))
    reach = 3.0 * float(np.median(radius))
    head = math.sqrt(2.0) * float(radius[arc <= reach].max()) + 1.0
    tail = math.sqrt(2.0) * float(radius[arc >= arc[-1] - reach].max()) + 1.0
    keep = (arc >= head) & (arc <= arc[-1] - tail)
    if np.count_nonzero(keep) < 2:
        return pixels
    return pixels[keep]


def _inscribed_radius(gland: BinaryMask, pixels: np.ndarray) -> np.ndarray:
    """Euclidean distance to the nearest background pixel at each (x, y) path pixel."""
    ys, xs = np.nonzero(gland)
    y0, x0 = max(int(ys.min()) - 1, 0), max(int(xs.min()) - 1, 0)
    depth = ndimage.distance_transform_edt(gland[y0:int(ys.max()) + 2, x0:int(xs.max()) + 2])
    return depth[pixels[:, 1].astype(np.int64) - y0, pixels[:, 0].astype(np.int64) - x0]


def extract_centerline(gland: BinaryMask, params: Optional[MetricParams] = None) -> Centerline:
    """
    Central line of one gland from endpoint M (smaller y) to endpoint N.

    The longest skeleton path loses its corner spurs, is smoothed, and both
    ends are extended along their tangents up to the gland edge.

    Raises:
        DegenerateGland: the skeleton has fewer than two pixels.
    """
    params = params or MetricParams()
    skeleton = skeletonize(gland)
    if np.count_nonzero(skeleton) < 2:
        raise DegenerateGland("gland skeleton has fewer than two pixels")

    path = _longest_path(skeleton)
    if path[0] > path[-1]:
        path.reverse()
    pixels = np.array([(x, y) for y, x in path], dtype=np.float64)
    pixels = _trim_spurs(pixels, _inscribed_radius(gland, pixels))
    smoothed = smooth_points(pixels, params.smoothing_window)

    k = min(len(smoothed) - 1, params.smoothing_window)
    head = _extension(gland, smoothed[0], smoothed[k], params.ray_step)
    tail = _extension(gland, smoothed[-1], smoothed[-1 - k], params.ray_step)
    points = np.vstack([np.array(head[::-1]).reshape(-1, 2), smoothed, np.array(tail).reshape(-1, 2)])
    return Centerline(points=points, pixels=pixels)


def resample(points: np.ndarray, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Points every `spacing` pixels of arc length, with their arc positions."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate(([0.0], np.cumsum(seg)))
    targets = np.arange(0.0, arc[-1] + 1e-9, spacing)
    keep = np.concatenate(([True], seg > 0))
    xs = np.interp(targets, arc[keep], points[keep, 0])
    ys = np.interp(targets, arc[keep], points[keep, 1])
    return np.column_stack([xs, ys]), targets


def _tangents(samples: np.ndarray) -> np.ndarray:
    d = np.gradient(samples, axis=0)
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return d / norm


# ---------------------------------------------------------------------------
# metrics

def gland_length(c: Centerline, r_mm_per_px: float) -> float:
    return r_mm_per_px * c.arc_length


def width_profile(gland: BinaryMask, c: Centerline, params: Optional[MetricParams] = None) -> WidthProfile:
    """
    Perpendicular chord widths every sample_spacing pixels along the centerline.

    Raises:
        NoValidSamples: every sample ray left the raster or started outside the gland.
    """
    params = params or MetricParams()
    samples, arc = resample(c.points, params.sample_spacing)
    if len(samples) < 2:
        raise NoValidSamples("centerline too short to sample")
    tangents = _tangents(samples)

    positions, arcs, widths = [], [], []
    for point, s, tangent in zip(samples, arc, tangents):
        if not _pixel_inside(gland, point[0], point[1]):
            continue
        normal = np.array([-tangent[1], tangent[0]])
        a = _ray_to_edge(gland, point, normal, params.ray_step)
        b = _ray_to_edge(gland, point, -normal, params.ray_step)
        if a is None or b is None:
            continue
        width = a + b
        if width <= 0:
            continue
        positions.append(point)
        arcs.append(s)
        widths.append(width)

    if not widths:
        raise NoValidSamples("no valid width samples")
    return WidthProfile(positions=np.array(positions), arc_positions=np.array(arcs), widths=np.array(widths))


def gland_width(w: WidthProfile, r_mm_per_px: float) -> float:
    return r_mm_per_px * float(np.mean(w.widths))


def deformation_index(w: WidthProfile, r_mm_per_px: float) -> float:
    # population SD (divide by n)
    return float(np.std(r_mm_per_px * w.widths))


def _tangent_samples(points: np.ndarray, spacing: float, knot_spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Points every `spacing` pixels along a least-squares cubic B-spline through the centerline.

    The spline has one knot span per `knot_spacing` pixels of arc, which
    removes the pixel staircase before tangents are taken. Centerlines with
    fewer than four points are resampled as they are.
    """
    if len(points) < 4:
        return resample(points, spacing)
    arc = float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())
    n_control = min(len(points), max(4, int(round(arc / knot_spacing)) + 3))
    curve = fit_bspline(points, degree=3, n_control=n_control)
    return resample(curve.sample(max(8 * len(points), 64)), spacing)


def tortuosity_index(
    c: Centerline,
    r_mm_per_px: float,
    spacing: float = 3.0,
    knot_spacing: float = 30.0,
) -> float:
    """
    (arc / chord) x mean |d alpha / (R ds)| over samples every `spacing` pixels.

    Tangent angles come from a cubic B-spline fitted to the centerline with
    knots every `knot_spacing` pixels.

    Raises:
        DegenerateChord: endpoints coincide (closed loop).
        DegenerateGland: fewer than three samples.
    """
    chord = c.chord_length
    if chord <= 1e-9:
        raise DegenerateChord("centerline endpoints coincide")
    samples, arc = _tangent_samples(c.points, spacing, knot_spacing)
    if len(samples) < 3:
        raise DegenerateGland("tortuosity needs at least three samples")
    tangents = _tangents(samples)
    angles = np.arctan2(tangents[:, 1], tangents[:, 0])
    turn = np.diff(angles)
    # wrap to (-pi, pi]
    turn = -((-turn + np.pi) % (2 * np.pi) - np.pi)
    ds = np.diff(arc)
    curvature = np.abs(turn / (r_mm_per_px * ds))
    return (c.arc_length / chord) * float(np.mean(curvature))


def area_ratio(gland_signal: BinaryMask, roi: RoiResult) -> float:
    if roi.area <= 0:
        raise EmptyRoi("GA needs a non-empty ROI")
    return 100.0 * np.count_nonzero(gland_signal & roi.roi_mask) / roi.area


def signal_index(img: GrayImage, gs: GlandSet, roi: RoiResult) -> SignalIndex:
    """
    lg of mean raw grey over labelled glands to mean raw grey over non-gland ROI.

    Raises:
        EmptyMask: no labelled gland pixels or no non-gland ROI pixels.
        ZeroBackground: the non-gland ROI mean is zero.
    """
    glands = np.zeros(img.shape, dtype=bool)
    for gland in gs.glands:
        glands |= gland.mask
    background = roi.roi_mask & ~gs.gland_signal
    if not glands.any():
        raise EmptyMask("signal index needs at least one labelled gland")
    if not background.any():
        raise EmptyMask("signal index needs non-gland ROI pixels")

    grey_i = float(img[glands].mean())
    grey_0 = float(img[background].mean())
    if grey_0 == 0:
        raise ZeroBackground("mean non-gland grey is zero")
    if grey_i == 0:
        raise DegenerateGland("mean gland grey is zero")
    si = math.log10(grey_i / grey_0)
    return SignalIndex(si=si, si_scaled=100.0 * si, grey_glands=grey_i, grey_background=grey_0)


def measure_gland(label: int, mask: BinaryMask, params: MetricParams) -> GlandMetrics:
    """All per-gland metrics; failures become flags instead of exceptions."""
    r = params.r_mm_per_px
    result = GlandMetrics(label=label, area=int(np.count_nonzero(mask)))
    try:
        centerline = extract_centerline(mask, params)
        profile = width_profile(mask, centerline, params)
    except (DegenerateGland, NoValidSamples) as e:
        result.flags.append(e.code)
        return result

    result.length_mm = gland_length(centerline, r)
    result.width_mm = gland_width(profile, r)
    result.deformation_mm = deformation_index(profile, r)
    result.n_width_samples = profile.n
    try:
        result.tortuosity = tortuosity_index(centerline, r, params.sample_spacing, params.tangent_knot_spacing)
    except (DegenerateChord, DegenerateGland) as e:
        result.flags.append(e.code)
    return result


def aggregate(glands: list[GlandMetrics]) -> dict[str, Optional[float]]:
    """Mean and population SD of each metric over the glands that have it."""
    out: dict[str, Optional[float]] = {}
    for name, attr in METRIC_FIELDS.items():
        values = [getattr(g, attr) for g in glands if getattr(g, attr) is not None]
        out[f"{name}_mean"] = float(np.mean(values)) if values else None
        out[f"{name}_sd"] = float(np.std(values)) if values else None
    return out


def analyze(
    img: GrayImage,
    r_mm_per_px: Optional[float] = None,
    roi_params: Optional[RoiParams] = None,
    gland_params: Optional[GlandParams] = None,
    metric_params: Optional[MetricParams] = None,
    trace: bool = False,
) -> ImageReport:
    """
    Full pipeline for one image.

    Raises:
        NoEyelidDetected: propagated from ROI segmentation.
    """
    metric_params = metric_params or MetricParams()
    if r_mm_per_px is not None:
        metric_params = metric_params.model_copy(update={"r_mm_per_px": r_mm_per_px})

    roi = segment_roi(img, roi_params, trace=trace)
    signal = segment_gland_signal(img, roi, gland_params)
    gland_set = extract_glands(signal, gland_params)

    glands = [measure_gland(g.label, g.mask, metric_params) for g in gland_set.glands]
    flags: list[str] = []
    try:
        si = signal_index(img, gland_set, roi)
    except (EmptyMask, ZeroBackground, DegenerateGland) as e:
        flags.append(f"SI:{e.code}")
        si = None

    report = ImageReport(
        r_mm_per_px=metric_params.r_mm_per_px,
        roi_area=roi.area,
        ga_percent=area_ratio(signal, roi),
        si=si.si if si else None,
        si_scaled=si.si_scaled if si else None,
        glands=glands,
        aggregates=aggregate(glands),
        n_signal_components=gland_set.n_signal_components,
        flags=flags,
        roi=roi,
        gland_set=gland_set,
    )
    logger.info(
        f"Analyzed image: GA {report.ga_percent:.2f}%, {len(glands)} glands, "
        f"SI {report.si if report.si is not None else 'n/a'}"
    )
    return report
