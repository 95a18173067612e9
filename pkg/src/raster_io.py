"""
src/raster_io.py - Reading and writing 8-bit rasters (PNG/BMP) with Pillow.
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from src.config import NATIVE_SIZE
from src.imgproc import BinaryMask, GrayImage

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Rec. 601 luma weights
LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(array: np.ndarray) -> GrayImage:
    """8-bit luminance of a grayscale, RGB or RGBA array."""
    if array.ndim == 2:
        if array.dtype == np.uint8:
            return array.copy()
        return np.clip(array, 0, 255).astype(np.uint8)
    rgb = array[..., :3].astype(np.float64)
    return np.clip(np.floor(rgb @ LUMA + 0.5), 0, 255).astype(np.uint8)


def read_gray(path: PathLike) -> GrayImage:
    """
    Load an image as a GrayImage, converting colour by Rec. 601 luminance.

    Raises:
        FileNotFoundError: path does not exist.
    """
    path = Path(path)
    with Image.open(path) as im:
        if im.mode in ("L", "RGB"):
            array = np.asarray(im)
        elif im.mode in ("1", "P", "I", "I;16", "F"):
            array = np.asarray(im.convert("L"))
        else:
            array = np.asarray(im.convert("RGB"))
    gray = to_gray(array)
    h, w = gray.shape
    if (w, h) != NATIVE_SIZE:
        logger.warning(f"{path.name}: {w}x{h} differs from the native {NATIVE_SIZE[0]}x{NATIVE_SIZE[1]}")
    return gray


def read_mask(path: PathLike) -> BinaryMask:
    """Nonzero pixels are foreground."""
    with Image.open(Path(path)) as im:
        return to_gray(np.asarray(im.convert("L"))) > 0


def write_gray(path: PathLike, img: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path)
    return path


def write_mask(path: PathLike, mask: BinaryMask) -> Path:
    return write_gray(path, np.where(mask, 255, 0).astype(np.uint8))


def write_rgb(path: PathLike, rgb: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path)
    return path


def write_trace(out_dir: PathLike, stem: str, stages: dict[str, np.ndarray]) -> list[Path]:
    """Write every traced stage as `<stem>_<nn>_<name>.png` in pipeline order."""
    written = []
    for index, (name, raster) in enumerate(stages.items(), start=1):
        target = Path(out_dir) / f"{stem}_{index:02d}_{name}.png"
        if raster.dtype == bool:
            written.append(write_mask(target, raster))
        else:
            written.append(write_gray(target, raster))
    return written
