"""
src/config.py - Typed configuration for the meibography pipeline.

All empirically chosen constants live here with their published defaults so
they can be overridden from code, tests or the CLI. Environment overrides
(MEIBO_LOG, MEIBO_R_MM_PER_PX) are read from the process environment after
loading an optional .env file.
"""
import logging
import os
from pathlib import Path
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

logger = logging.getLogger(__name__)

# Calibrated digital resolution of the Keratograph 5M images.
DEFAULT_R_MM_PER_PX = 0.03
# Native sensor resolution (width, height).
NATIVE_SIZE = (1088, 512)

REPORT_SCHEMA_VERSION = "1.0"


class RoiParams(BaseModel):
    """Constants of the tarsal-conjunctiva segmentation."""

    reflection_dilate_diameter: int = Field(5, ge=1)
    median_diameter: int = Field(3, ge=1)
    highlight_size: int = Field(25, ge=3)
    laplacian_size: int = Field(29, ge=3)
    normalized_laplacian: bool = True
    # window of the local mean that replaces masked pixels in I_GM
    fill_size: int = Field(9, ge=3)
    # nested Otsu levels before the inverted binarization
    otsu_depth: int = Field(3, ge=1)
    open_size: int = Field(5, ge=1)
    min_block_area: int = Field(190, ge=1)
    gradient_out_diameter: int = Field(8, ge=1)
    cf_size: int = Field(15, ge=1)
    min_area_fraction: float = Field(0.05, gt=0.0, lt=1.0)
    min_size: int = Field(64, ge=3)


class GlandParams(BaseModel):
    """Constants of gland segmentation and fragmentation."""

    median_diameter: int = Field(3, ge=1)
    highlight_size: int = Field(25, ge=3)
    laplacian_size: int = Field(29, ge=3)
    normalized_laplacian: bool = True
    binary_median_diameter: int = Field(5, ge=1)
    min_angle: float = 45.0
    max_angle: float = 135.0
    min_gland_area: int = Field(1400, ge=1)
    max_horizontal_segments: int = 350
    max_vertical_segments: int = 200
    fragment_se_width: int = Field(3, ge=1)
    fragment_se_height: int = Field(1, ge=1)
    repair_diameter: int = Field(3, ge=1)
    max_fragment_iterations: int = Field(100, ge=1)


class MetricParams(BaseModel):
    """Sampling constants of the per-gland geometry."""

    r_mm_per_px: float = Field(DEFAULT_R_MM_PER_PX, gt=0.0)
    sample_spacing: float = Field(3.0, gt=0.0)
    smoothing_window: int = Field(5, ge=1)
    # knot spacing of the spline that carries the tortuosity tangents
    tangent_knot_spacing: float = Field(30.0, gt=0.0)
    ray_step: float = Field(0.25, gt=0.0)


class RunConfig(BaseModel):
    """Options of one CLI batch run."""

    inputs: list[Path] = Field(default_factory=list)
    out_dir: Path = Path("out")
    r_mm_per_px: float = Field(DEFAULT_R_MM_PER_PX, gt=0.0)
    report_format: Literal["json", "csv"] = "json"
    overlay: bool = False
    trace: bool = False
    jobs: int = Field(1, ge=1)

    @field_validator("inputs")
    @classmethod
    def _sorted_inputs(cls, value: list[Path]) -> list[Path]:
        # Output order is a function of the input paths only.
        return sorted(value, key=lambda p: str(p))


def load_environment(dotenv_path: Optional[str] = None) -> dict:
    """
    Load an optional .env file and return the MEIBO_* overrides.

    Returns:
        Dict with keys 'log_level' (str or None) and 'r_mm_per_px'
        (float or None).
    """
    load_dotenv(dotenv_path=dotenv_path, override=False)

    overrides: dict = {"log_level": None, "r_mm_per_px": None}

    level = os.environ.get("MEIBO_LOG")
    if level:
        overrides["log_level"] = level.upper()

    r_value = os.environ.get("MEIBO_R_MM_PER_PX")
    if r_value:
        try:
            parsed = float(r_value)
        except ValueError:
            logger.warning(f"Ignoring MEIBO_R_MM_PER_PX={r_value!r}: not a number")
        else:
            if parsed > 0:
                overrides["r_mm_per_px"] = parsed
            else:
                logger.warning(f"Ignoring MEIBO_R_MM_PER_PX={r_value!r}: must be > 0")

    return overrides
