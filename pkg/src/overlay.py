"""
src/overlay.py - RGB renderings of segmentation results over the source image.
"""
import colorsys
from typing import Iterable

import numpy as np

from src.imgproc import BinaryMask, GrayImage, StructuringElement, gradient_in

RED = (255, 0, 0)
YELLOW = (255, 255, 0)


def contour(mask: BinaryMask) -> BinaryMask:
    """One-pixel inner boundary."""
    return gradient_in(mask.astype(bool), StructuringElement.rectangle(3, 3))


def to_rgb(img: GrayImage) -> np.ndarray:
    return np.repeat(np.asarray(img, dtype=np.uint8)[:, :, None], 3, axis=2)


def draw_overlay(img: GrayImage, roi_mask: BinaryMask, glands: Iterable[BinaryMask]) -> np.ndarray:
    """ROI contour in red, gland contours in yellow."""
    out = to_rgb(img)
    out[contour(roi_mask)] = RED
    for gland in glands:
        out[contour(gland)] = YELLOW
    return out


def draw_comparison(img: GrayImage, reference: BinaryMask, candidate: BinaryMask) -> np.ndarray:
    """Reference contour in yellow, candidate contour in red (drawn on top)."""
    out = to_rgb(img)
    out[contour(reference)] = YELLOW
    out[contour(candidate)] = RED
    return out


def palette(n: int) -> np.ndarray:
    """n distinct colours stepping the hue by the golden angle."""
    colours = []
    for i in range(n):
        r, g, b = colorsys.hsv_to_rgb((i * 0.618033988749895) % 1.0, 0.85, 1.0)
        colours.append((round(255 * r), round(255 * g), round(255 * b)))
    return np.array(colours, dtype=np.float64).reshape(-1, 3)


def label_glands(img: GrayImage, glands: list[BinaryMask], alpha: float = 0.5) -> np.ndarray:
    """Each gland filled with its own colour blended over the source."""
    out = to_rgb(img).astype(np.float64)
    for gland, colour in zip(glands, palette(len(glands))):
        out[gland] = (1.0 - alpha) * out[gland] + alpha * colour
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
