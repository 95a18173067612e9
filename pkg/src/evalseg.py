"""
src/evalseg.py - Agreement between a reference and a candidate segmentation.

k   = 2 |Sm & Sa| / (|Sm| + |Sa|)
r_p = (|Sa| - |Sm & Sa|) / |Sm| * 100
r_n = (|Sm| - |Sm & Sa|) / |Sm| * 100
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from src.errors import DimensionMismatch, EmptyReference


@dataclass(frozen=True)
class SegScore:
    reference_area: int
    candidate_area: int
    overlap_area: int

    @property
    def k_exact(self) -> Fraction:
        return Fraction(2 * self.overlap_area, self.reference_area + self.candidate_area)

    @property
    def r_p_exact(self) -> Fraction:
        return Fraction(100 * (self.candidate_area - self.overlap_area), self.reference_area)

    @property
    def r_n_exact(self) -> Fraction:
        return Fraction(100 * (self.reference_area - self.overlap_area), self.reference_area)

    @property
    def k(self) -> float:
        return float(self.k_exact)

    @property
    def r_p(self) -> float:
        return float(self.r_p_exact)

    @property
    def r_n(self) -> float:
        return float(self.r_n_exact)


def score(s_m: np.ndarray, s_a: np.ndarray) -> SegScore:
    """
    Score candidate s_a against reference s_m.

    Raises:
        DimensionMismatch: masks differ in shape.
        EmptyReference: the reference has no foreground.
    """
    if s_m.shape != s_a.shape:
        raise DimensionMismatch(f"reference {s_m.shape} vs candidate {s_a.shape}")
    s_m = s_m.astype(bool)
    s_a = s_a.astype(bool)
    reference_area = int(np.count_nonzero(s_m))
    if reference_area == 0:
        raise EmptyReference("reference mask is empty")
    return SegScore(
        reference_area=reference_area,
        candidate_area=int(np.count_nonzero(s_a)),
        overlap_area=int(np.count_nonzero(s_m & s_a)),
    )


def union(masks: Iterable[np.ndarray], shape) -> np.ndarray:
    """Union of gland masks; gland-level scoring compares unions."""
    out = np.zeros(shape, dtype=bool)
    for m in masks:
        out |= m
    return out
