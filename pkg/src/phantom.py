"""
src/phantom.py - Synthetic meibography images with exact ground truth.

A phantom is a hard-edged elliptical eyelid over a darker surround, with
intensity-elevated gland ribbons inside it. Truth masks and analytic metrics
come from the generative parameters and are computed noise-free; noise, lash
streaks and the illumination gradient only touch the observed image.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.integrate import quad

from src.config import DEFAULT_R_MM_PER_PX, NATIVE_SIZE
from src.errors import SpecInfeasible
from src.imgproc import BinaryMask, GrayImage, StructuringElement, erode

logger = logging.getLogger(__name__)

# minimum clearance between a gland and the eyelid contour, in pixels
GLAND_MARGIN = 2
# lashes of one phantom share a heading within +-LASH_JITTER degrees
LASH_JITTER = 2.0
LASH_SPACING = 30.0


class EyelidSpec(BaseModel):
    cx: float = 544.0
    cy: float = 250.0
    a: float = Field(500.0, gt=0)
    b: float = Field(165.0, gt=0)


class GlandSpec(BaseModel):
    """One ribbon: x(y) = base_x + amplitude * sin(2 pi (y - top) / period + phase)."""

    base_x: float
    top: int = Field(ge=0)
    length: int = Field(ge=2)
    width: float = Field(14.0, gt=1.0)
    width_model: Literal["constant", "step", "taper"] = "constant"
    width_delta: float = Field(0.0, ge=0.0)
    amplitude: float = Field(0.0, ge=0.0)
    period: float = Field(200.0, gt=0.0)
    phase: float = 0.0

    @model_validator(mode="after")
    def _positive_width(self):
        if self.width - self.width_delta <= 1.0:
            raise ValueError("width - width_delta must stay above 1 px")
        return self


class PhantomSpec(BaseModel):
    name: str = "phantom"
    width: int = Field(NATIVE_SIZE[0], ge=64)
    height: int = Field(NATIVE_SIZE[1], ge=64)
    eyelid: EyelidSpec = Field(default_factory=EyelidSpec)
    # explicit ribbons; when empty, gland_count glands are laid out evenly
    glands: list[GlandSpec] = Field(default_factory=list)
    gland_count: int = Field(20, ge=0)
    gland_width: float = Field(14.0, gt=1.0)
    gland_width_model: Literal["constant", "step", "taper"] = "constant"
    gland_width_delta: float = Field(0.0, ge=0.0)
    gland_amplitude: float = Field(0.0, ge=0.0)
    gland_period: float = Field(200.0, gt=0.0)
    tip_margin: float = Field(24.0, ge=GLAND_MARGIN)
    fused_pairs: list[int] = Field(default_factory=list)
    gland_intensity: float = Field(150.0, ge=0, le=255)
    background_intensity: float = Field(110.0, ge=0, le=255)
    surround_intensity: float = Field(55.0, ge=0, le=255)
    lash_intensity: float = Field(5.0, ge=0, le=255)
    noise_sigma: float = Field(0.0, ge=0.0)
    lash_count: int = Field(0, ge=0)
    illumination: float = Field(0.0, ge=0.0, lt=1.0)
    r_mm_per_px: float = Field(DEFAULT_R_MM_PER_PX, gt=0.0)
    seed: int = 0

    def ribbons(self) -> list[GlandSpec]:
        return list(self.glands) if self.glands else layout_glands(self)


@dataclass
class GlandTruth:
    label: int
    area_px: float
    length_mm: float
    width_mm: float
    deformation_mm: float
    tortuosity: float


@dataclass
class PhantomTruth:
    roi_mask: BinaryMask
    gland_masks: list[BinaryMask]
    gland_signal: BinaryMask
    roi_area: float
    ga: float
    ga_pixels: float
    si: float
    si_analytic: float
    glands: list[GlandTruth] = field(default_factory=list)
    # tissue intensities only: no illumination, lashes or noise
    clean: Optional[GrayImage] = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# ribbon geometry

def _centerline_x(g: GlandSpec, y):
    return g.base_x + g.amplitude * np.sin(2 * np.pi * (y - g.top) / g.period + g.phase)


def _slope(g: GlandSpec, y):
    k = 2 * np.pi / g.period
    return g.amplitude * k * np.cos(k * (y - g.top) + g.phase)


def _curvature_term(g: GlandSpec, y):
    """|d theta / dy| of the centerline graph x(y)."""
    k = 2 * np.pi / g.period
    second = -g.amplitude * k * k * np.sin(k * (y - g.top) + g.phase)
    return np.abs(second) / (1.0 + _slope(g, y) ** 2)


def _width_at(g: GlandSpec, y):
    u = (np.asarray(y, dtype=np.float64) - g.top + 0.5) / g.length
    if g.width_model == "step":
        return np.where(u < 0.5, g.width - g.width_delta, g.width + g.width_delta)
    if g.width_model == "taper":
        return g.width - g.width_delta + 2.0 * g.width_delta * np.clip(u, 0.0, 1.0)
    return np.full(np.shape(u), g.width)


def _extent(g: GlandSpec) -> tuple[float, float]:
    return g.top - 0.5, g.top + g.length - 0.5


def layout_glands(spec: PhantomSpec) -> list[GlandSpec]:
    """Evenly spaced glands spanning the eyelid, tips tip_margin inside its contour."""
    n = spec.gland_count
    if n == 0:
        return []
    lid = spec.eyelid
    w = spec.gland_width
    lo = max(lid.cx - 0.75 * lid.a, 4.0 * w)
    hi = min(lid.cx + 0.75 * lid.a, spec.width - 4.0 * w)
    centers = np.linspace(lo, hi, n) if n > 1 else np.array([lid.cx])

    glands = []
    for c in centers:
        # ribbon edges on half-integers so a w-wide row holds exactly w pixels
        c = math.floor(c - w / 2) + 0.5 + w / 2
        dx = min(abs(c - lid.cx) + w / 2, lid.a)
        half = lid.b * math.sqrt(max(0.0, 1.0 - (dx / lid.a) ** 2))
        top = int(math.ceil(max(lid.cy - half, 0.0) + spec.tip_margin))
        bottom = int(math.floor(min(lid.cy + half, spec.height - 1.0) - spec.tip_margin))
        if bottom - top + 1 < 2:
            raise SpecInfeasible(f"no room for a gland at x={c:.1f}")
        glands.append(GlandSpec(
            base_x=c,
            top=top,
            length=bottom - top + 1,
            width=w,
            width_model=spec.gland_width_model,
            width_delta=spec.gland_width_delta,
            amplitude=spec.gland_amplitude,
            period=spec.gland_period,
        ))
    return glands


def render_gland(g: GlandSpec, shape) -> BinaryMask:
    """
    Truth mask of one ribbon.

    A pixel belongs to the gland when its horizontal offset from the centerline
    is at most (w/2)/cos(theta) within the gland's row range.
    """
    h, w = shape
    y0, y1 = g.top, g.top + g.length - 1
    if y0 < 0 or y1 >= h:
        raise SpecInfeasible(f"gland rows {y0}..{y1} leave the {w}x{h} image")

    rows = np.arange(y0, y1 + 1)
    ry = rows.astype(np.float64)
    xc = _centerline_x(g, ry)
    half = _width_at(g, ry) / 2.0 * np.sqrt(1.0 + _slope(g, ry) ** 2)
    x_lo = int(math.floor((xc - half).min()))
    x_hi = int(math.ceil((xc + half).max()))
    if x_lo < 0 or x_hi >= w:
        raise SpecInfeasible(f"gland at x={g.base_x:.1f} leaves the image")
    cols = np.arange(x_lo, x_hi + 1)

    mask = np.zeros(shape, dtype=bool)
    mask[np.ix_(rows, cols)] = np.abs(cols[None, :] - xc[:, None]) <= half[:, None]
    return mask


def _eyelid(spec: PhantomSpec) -> BinaryMask:
    lid = spec.eyelid
    ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    u = (xs - lid.cx) / lid.a
    v = (ys - lid.cy) / lid.b
    return u * u + v * v <= 1.0


def _roi_area(spec: PhantomSpec) -> float:
    lid = spec.eyelid
    top_limit, bottom_limit = -0.5, spec.height - 0.5

    def column(x):
        t = 1.0 - ((x - lid.cx) / lid.a) ** 2
        if t <= 0:
            return 0.0
        half = lid.b * math.sqrt(t)
        return max(0.0, min(lid.cy + half, bottom_limit) - max(lid.cy - half, top_limit))

    lo = max(-0.5, lid.cx - lid.a)
    hi = min(spec.width - 0.5, lid.cx + lid.a)
    area, _ = quad(column, lo, hi, limit=200)
    return area


def gland_truth(g: GlandSpec, label: int, r_mm_per_px: float) -> GlandTruth:
    """Analytic L, D, DI, TI and area of one ribbon by numeric quadrature."""
    a, b = _extent(g)
    breaks = [g.top + g.length / 2.0 - 0.5] if g.width_model == "step" else None

    def ds(y):
        return math.sqrt(1.0 + float(_slope(g, y)) ** 2)

    limit = max(200, int(g.length))

    arc, _ = quad(ds, a, b, limit=limit)
    area, _ = quad(lambda y: float(_width_at(g, y)) * ds(y), a, b, points=breaks, limit=limit)
    mean_w = area / arc
    var, _ = quad(lambda y: (float(_width_at(g, y)) - mean_w) ** 2 * ds(y), a, b, points=breaks, limit=limit)
    turning, _ = quad(lambda y: float(_curvature_term(g, y)), a, b, limit=limit)

    chord = math.hypot(float(_centerline_x(g, b) - _centerline_x(g, a)), b - a)
    return GlandTruth(
        label=label,
        area_px=area,
        length_mm=r_mm_per_px * arc,
        width_mm=r_mm_per_px * mean_w,
        deformation_mm=r_mm_per_px * math.sqrt(max(var / arc, 0.0)),
        tortuosity=turning / (r_mm_per_px * chord),
    )


def _bridge(left: GlandSpec, right: GlandSpec, shape) -> BinaryMask:
    """Horizontal 4-px bar joining two neighbouring ribbons at their shared mid-row."""
    y_top = max(left.top, right.top)
    y_bottom = min(left.top + left.length, right.top + right.length) - 1
    if y_bottom - y_top < 4:
        raise SpecInfeasible("fused glands share no rows")
    mid = (y_top + y_bottom) // 2
    rows = np.arange(mid - 2, mid + 2)
    x0 = int(math.floor(float(_centerline_x(left, mid))))
    x1 = int(math.ceil(float(_centerline_x(right, mid))))
    out = np.zeros(shape, dtype=bool)
    out[rows[0]:rows[-1] + 1, min(x0, x1):max(x0, x1) + 1] = True
    return out


def _lash_roots(spec: PhantomSpec, rng: np.random.Generator) -> list[float]:
    """Root columns along the upper margin, at least LASH_SPACING apart."""
    lid = spec.eyelid
    roots: list[float] = []
    for _ in range(100 * spec.lash_count):
        if len(roots) == spec.lash_count:
            break
        x = rng.uniform(lid.cx - 0.6 * lid.a, lid.cx + 0.6 * lid.a)
        if all(abs(x - other) >= LASH_SPACING for other in roots):
            roots.append(x)
    if len(roots) < spec.lash_count:
        logger.debug(f"Placed {len(roots)} of {spec.lash_count} lashes")
    return roots


def _draw_lashes(canvas: np.ndarray, spec: PhantomSpec, rng: np.random.Generator) -> None:
    """Thin dark streaks rooted just inside the upper eyelid margin, pointing outwards in one common direction."""
    lid = spec.eyelid
    ys, xs = np.mgrid[0:spec.height, 0:spec.width]
    heading = rng.uniform(70.0, 110.0)
    for x_root in _lash_roots(spec, rng):
        t = max(0.0, 1.0 - ((x_root - lid.cx) / lid.a) ** 2)
        y_root = lid.cy - lid.b * math.sqrt(t) + rng.uniform(1.0, 6.0)
        angle = math.radians(heading + rng.uniform(-LASH_JITTER, LASH_JITTER))
        length = rng.uniform(30.0, 60.0)
        x_tip = x_root + length * math.cos(angle)
        y_tip = y_root - length * math.sin(angle)

        px, py = x_tip - x_root, y_tip - y_root
        t_proj = np.clip(((xs - x_root) * px + (ys - y_root) * py) / (px * px + py * py), 0.0, 1.0)
        dist = np.hypot(xs - (x_root + t_proj * px), ys - (y_root + t_proj * py))
        canvas[dist <= 1.0] = spec.lash_intensity


def _quantize(values: np.ndarray) -> GrayImage:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def generate(spec: PhantomSpec) -> tuple[GrayImage, PhantomTruth]:
    """
    Render a phantom and its ground truth.

    Raises:
        SpecInfeasible: glands overlap, leave the image, come closer than
            GLAND_MARGIN pixels to the eyelid contour, or are not brighter
            than the eyelid background.
    """
    if spec.gland_intensity <= spec.background_intensity:
        raise SpecInfeasible("gland intensity must exceed the eyelid background")
    shape = (spec.height, spec.width)
    ribbons = spec.ribbons()

    roi_mask = _eyelid(spec)
    inner = erode(roi_mask, StructuringElement.disk(2 * GLAND_MARGIN + 1))

    gland_masks: list[BinaryMask] = []
    claimed = np.zeros(shape, dtype=bool)
    for index, g in enumerate(ribbons, start=1):
        mask = render_gland(g, shape)
        if (mask & ~inner).any():
            raise SpecInfeasible(f"gland {index} is closer than {GLAND_MARGIN} px to the eyelid contour")
        if (mask & claimed).any():
            raise SpecInfeasible(f"gland {index} overlaps a neighbour")
        claimed |= mask
        gland_masks.append(mask)

    gland_signal = claimed.copy()
    for i in spec.fused_pairs:
        if not 0 <= i < len(ribbons) - 1:
            raise SpecInfeasible(f"fused pair index {i} out of range")
        bridge = _bridge(ribbons[i], ribbons[i + 1], shape)
        if (bridge & ~inner).any():
            raise SpecInfeasible(f"bridge {i} leaves the eyelid")
        gland_signal |= bridge

    background = spec.background_intensity
    tissue = np.full(shape, spec.surround_intensity, dtype=np.float64)
    tissue[roi_mask] = background
    tissue[gland_signal] = spec.gland_intensity
    clean = _quantize(tissue)

    observed = tissue.copy()
    if spec.illumination > 0:
        ramp = np.linspace(-0.5, 0.5, spec.width)[None, :]
        observed = observed * (1.0 + spec.illumination * ramp)
    rng = np.random.default_rng(spec.seed)
    _draw_lashes(observed, spec, rng)
    if spec.noise_sigma > 0:
        observed = observed + rng.normal(0.0, spec.noise_sigma, size=shape)
    image = _quantize(observed)

    roi_area = _roi_area(spec)
    truths = [gland_truth(g, i, spec.r_mm_per_px) for i, g in enumerate(ribbons, start=1)]
    signal_area = sum(t.area_px for t in truths) + float(np.count_nonzero(gland_signal & ~claimed))

    non_gland = roi_mask & ~gland_signal
    if claimed.any() and non_gland.any():
        si = math.log10(float(clean[claimed].mean()) / float(clean[non_gland].mean()))
    else:
        si = float("nan")

    truth = PhantomTruth(
        roi_mask=roi_mask,
        gland_masks=gland_masks,
        gland_signal=gland_signal,
        roi_area=roi_area,
        ga=100.0 * signal_area / roi_area,
        ga_pixels=100.0 * np.count_nonzero(gland_signal & roi_mask) / np.count_nonzero(roi_mask),
        si=si,
        si_analytic=math.log10(spec.gland_intensity / background),
        glands=truths,
        clean=clean,
    )
    logger.info(f"Generated phantom '{spec.name}': {len(gland_masks)} glands, GA {truth.ga:.2f}%")
    return image, truth


def load_specs(path) -> list[PhantomSpec]:
    """One spec, or a corpus file holding {"specs": [...]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "specs" in data:
        return [PhantomSpec.model_validate(item) for item in data["specs"]]
    return [PhantomSpec.model_validate(data)]


def truth_to_dict(spec: PhantomSpec, truth: PhantomTruth) -> dict:
    def r(value: float) -> Optional[float]:
        return None if value is None or math.isnan(value) else round(float(value), 4)

    return {
        "name": spec.name,
        "seed": spec.seed,
        "R_mm_per_px": spec.r_mm_per_px,
        "roi": {"area_px": r(truth.roi_area), "pixel_count": int(np.count_nonzero(truth.roi_mask))},
        "GA_percent": r(truth.ga),
        "GA_pixels_percent": r(truth.ga_pixels),
        "SI": r(truth.si),
        "SI_analytic": r(truth.si_analytic),
        "glands": [
            {
                "label": g.label,
                "area_px": r(g.area_px),
                "L_mm": r(g.length_mm),
                "D_mm": r(g.width_mm),
                "DI_mm": r(g.deformation_mm),
                "TI": r(g.tortuosity),
            }
            for g in truth.glands
        ],
    }
