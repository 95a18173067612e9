"""
src/bspline.py - Least-squares B-spline curves with centripetal parameterization.

Used to smooth the eyelid boundary scan points into the upper and lower ROI
boundaries.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import BSpline

from src.errors import TooFewPoints

logger = logging.getLogger(__name__)


def basis_matrix(knots: np.ndarray, degree: int, t: np.ndarray) -> np.ndarray:
    """
    B-spline basis functions at parameters t, right end of the knot span included.

    Returns:
        Array of shape (len(t), len(knots) - degree - 1).
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    k = np.asarray(knots, dtype=np.float64)
    return BSpline.design_matrix(t, k, degree).toarray()


def clamped_uniform_knots(n_control: int, degree: int) -> np.ndarray:
    interior = [i / (n_control - degree) for i in range(1, n_control - degree)]
    return np.array([0.0] * (degree + 1) + interior + [1.0] * (degree + 1))


def centripetal_parameters(points: np.ndarray) -> np.ndarray:
    """Parameters in [0, 1] with increments proportional to sqrt(chord length)."""
    steps = np.sqrt(np.linalg.norm(np.diff(points, axis=0), axis=1))
    cumulative = np.cumsum(steps)
    if len(cumulative) == 0 or cumulative[-1] == 0:
        return np.linspace(0.0, 1.0, len(points))
    # Last parameter is exactly 1.
    return np.clip(np.concatenate(([0.0], cumulative / cumulative[-1])), 0.0, 1.0)


@dataclass
class BSplineCurve:
    """Clamped B-spline over t in [0, 1]."""

    degree: int
    control_points: np.ndarray
    knots: np.ndarray

    def __post_init__(self):
        if len(self.knots) != len(self.control_points) + self.degree + 1:
            raise ValueError("knot count must equal control points + degree + 1")

    def evaluate(self, t) -> np.ndarray:
        """Points (len(t), 2) on the curve."""
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=np.float64)), 0.0, 1.0)
        return BSpline(self.knots, self.control_points, self.degree)(t)

    def sample(self, count: int) -> np.ndarray:
        return self.evaluate(np.linspace(0.0, 1.0, count))


def fit_bspline(
    points: Sequence[Sequence[float]],
    degree: int = 2,
    n_control: Optional[int] = None,
) -> BSplineCurve:
    """
    Least-squares B-spline fit of ordered (x, y) points.

    Args:
        points: ordered (x, y) samples
        degree: spline degree (2 for the ROI boundaries)
        n_control: control point count; defaults to max(4, n / 10) capped at n

    Raises:
        TooFewPoints: fewer than degree + 1 points.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n < degree + 1:
        raise TooFewPoints(f"degree {degree} fit needs at least {degree + 1} points, got {n}")

    if n_control is None:
        n_control = min(n, max(4, n // 10))
    n_control = max(min(n_control, n), degree + 1)

    t = centripetal_parameters(pts)
    knots = clamped_uniform_knots(n_control, degree)
    design = basis_matrix(knots, degree, t)
    control, *_ = np.linalg.lstsq(design, pts, rcond=None)
    logger.debug(f"B-spline fit: {n} points, {n_control} control points, degree {degree}")
    return BSplineCurve(degree=degree, control_points=control, knots=knots)
