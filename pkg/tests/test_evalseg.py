"""
tests/test_evalseg.py - Unit tests for segmentation agreement scores.
"""
from fractions import Fraction

import numpy as np
import pytest

from src.errors import DimensionMismatch, EmptyReference
from src.evalseg import score, union
from src.report import score_to_dict, summarize_scores


class TestScore:
    """Test cases for k, r_p and r_n."""

    def test_identical_masks(self, rng):
        """Test identical masks give k = 1 and no errors."""
        mask = rng.random((64, 64)) > 0.5
        result = score(mask, mask)
        assert result.k_exact == 1
        assert result.r_p == 0 and result.r_n == 0

    def test_disjoint_masks(self):
        """Test disjoint masks give k = 0 and 100% false negatives."""
        a = np.zeros((4, 4), bool)
        b = np.zeros((4, 4), bool)
        a[0, :2] = True
        b[3, :] = True
        result = score(a, b)
        assert result.k == 0
        assert result.r_n == 100
        assert result.r_p == 200

    def test_half_overlap(self):
        """Test the hand-computed 2x4 against 4x4 case."""
        reference = np.zeros((8, 8), bool)
        candidate = np.zeros((8, 8), bool)
        reference[0:4, 0:4] = True
        candidate[2:4, 0:4] = True
        result = score(reference, candidate)
        assert result.k_exact == Fraction(2 * 8, 16 + 8)
        assert result.r_p == 0
        assert result.r_n == 50

    def test_random_pairs_exact(self, rng):
        """Test scores equal per-pixel counting in rational arithmetic."""
        for _ in range(100):
            s_m = rng.random((64, 64)) > 0.6
            s_a = rng.random((64, 64)) > 0.4
            if not s_m.any():
                continue
            both = int((s_m & s_a).sum())
            n_m, n_a = int(s_m.sum()), int(s_a.sum())
            result = score(s_m, s_a)
            assert result.k_exact == Fraction(2 * both, n_m + n_a)
            assert result.r_p_exact == Fraction(100 * (n_a - both), n_m)
            assert result.r_n_exact == Fraction(100 * (n_m - both), n_m)

    def test_shape_mismatch(self):
        """Test differing shapes raise DimensionMismatch."""
        with pytest.raises(DimensionMismatch):
            score(np.ones((4, 4), bool), np.ones((4, 5), bool))

    def test_empty_reference(self):
        """Test an empty reference raises EmptyReference."""
        with pytest.raises(EmptyReference):
            score(np.zeros((4, 4), bool), np.ones((4, 4), bool))

    def test_union(self):
        """Test the union of gland masks."""
        a = np.zeros((3, 3), bool)
        b = np.zeros((3, 3), bool)
        a[0, 0] = b[2, 2] = True
        assert union([a, b], (3, 3)).sum() == 2


class TestScoreSummary:
    """Test cases for score records and summaries."""

    def test_score_record(self):
        """Test the record carries rounded metrics and raw areas."""
        reference = np.zeros((3, 3), bool)
        reference[:, 0] = True
        candidate = reference.copy()
        candidate[0, 1] = True
        record = score_to_dict(score(reference, candidate), "manual.png", "auto.png")
        assert record["k"] == round(6 / 7, 4)
        assert record["r_p"] == round(100 / 3, 4)
        assert record["overlap_area_px"] == 3

    def test_mean_and_population_sd(self):
        """Test the summary uses the population standard deviation."""
        full = np.ones((2, 2), bool)
        half = np.zeros((2, 2), bool)
        half[0] = True
        scores = [score(full, full), score(full, half)]
        summary = summarize_scores(scores)
        assert summary["n"] == 2
        assert summary["r_n_mean"] == 25.0
        assert summary["r_n_sd"] == 25.0
