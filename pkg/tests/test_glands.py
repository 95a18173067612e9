"""
tests/test_glands.py - Unit tests for gland extraction and fragmentation.
"""
import numpy as np
import pytest

from src.bspline import fit_bspline
from src.config import GlandParams
from src.errors import EmptyRoi, FragmentationDiverged
from src.evalseg import score, union
from src.glands import (
    SegmentCounts,
    count_segments,
    extract_glands,
    fragment,
    is_connected_gland,
    keep_upright,
    repair,
    segment_gland_signal,
)
from src.roi import RoiResult, segment_roi
from tests.conftest import bar


def best_k(part, bars):
    return max(score(b, part).k for b in bars)


class TestSegmentCounts:
    """Test cases for N_h / N_v and the connected-gland rule."""

    def test_vertical_bar(self):
        """Test a 20x150 bar has 150 row runs and 20 column runs."""
        counts = count_segments(bar((200, 60), 10, 10, 150, 20))
        assert counts == SegmentCounts(n_h=150, n_v=20)

    def test_comb_counts_every_run(self):
        """Test two runs per row are both counted."""
        mask = bar((20, 20), 2, 2, 10, 3) | bar((20, 20), 2, 10, 10, 3)
        assert count_segments(mask).n_h == 20

    def test_thresholds_are_strict(self):
        """Test 350/200 segments are still one gland and 351 is not."""
        assert not is_connected_gland(SegmentCounts(350, 200))
        assert is_connected_gland(SegmentCounts(351, 10))
        assert is_connected_gland(SegmentCounts(10, 201))


class TestFragment:
    """Test cases for separating fused glands."""

    def test_dumbbell_splits_in_two(self, dumbbell):
        """Test two bars joined by a thin bridge come apart."""
        mask, bars = dumbbell
        parts = fragment(mask)
        assert len(parts) == 2
        for part in parts:
            assert best_k(part, bars) >= 0.85

    def test_triple_chain_splits_in_three(self, triple_chain):
        """Test three chained bars give three glands."""
        mask, bars = triple_chain
        parts = fragment(mask)
        assert len(parts) == 3
        assert sorted(best_k(p, bars) >= 0.85 for p in parts) == [True, True, True]

    def test_side_by_side_uses_transposed_element(self):
        """Test bars fused by a horizontal bridge split via the vertical element."""
        shape = (200, 110)
        bars = [bar(shape, 20, 20, 150, 20), bar(shape, 20, 60, 150, 20)]
        mask = bars[0] | bars[1] | bar(shape, 90, 40, 4, 20)
        parts = fragment(mask)
        assert len(parts) == 2
        for part in parts:
            assert best_k(part, bars) >= 0.85

    def test_outputs_disjoint_single_components(self, triple_chain):
        """Test fragments never overlap."""
        mask, _ = triple_chain
        parts = fragment(mask)
        total = sum(int(p.sum()) for p in parts)
        assert total == int(union(parts, mask.shape).sum())

    def test_single_bar_returned_unsplit(self, caplog):
        """Test a bar that cannot split comes back unchanged with a warning."""
        single = bar((200, 60), 20, 20, 150, 20)
        parts = fragment(single)
        assert len(parts) == 1
        assert np.array_equal(parts[0], single)
        assert "Fragmentation diverged" in caplog.text

    def test_single_bar_strict_raises(self):
        """Test strict mode raises FragmentationDiverged."""
        with pytest.raises(FragmentationDiverged):
            fragment(bar((200, 60), 20, 20, 150, 20), strict=True)

    def test_repair_closes_cut(self):
        """Test a one-pixel skeleton cut through a bar is closed again."""
        original = bar((80, 40), 10, 10, 50, 20)
        diagonal = np.eye(80, 40, k=-20, dtype=bool)
        repaired = repair(original & ~diagonal)
        assert np.array_equal(repaired, original)

    def test_repair_keeps_rectangle(self):
        """Test a plain rectangle is unchanged."""
        rect = bar((80, 40), 10, 10, 20, 20)
        assert np.array_equal(repair(rect), rect)


class TestExtractGlands:
    """Test cases for labeling intact glands."""

    def test_empty_signal(self):
        """Test an empty signal gives no glands."""
        gs = extract_glands(np.zeros((100, 100), bool))
        assert gs.glands == []
        assert gs.n_signal_components == 0

    def test_stripes_labelled_left_to_right(self):
        """Test twelve stripes become twelve glands ordered by centroid x."""
        shape = (300, 700)
        mask = np.zeros(shape, bool)
        xs = [20 + 55 * i for i in range(12)]
        for x in reversed(xs):
            mask |= bar(shape, 40, x, 150, 14)
        gs = extract_glands(mask)
        assert [g.label for g in gs.glands] == list(range(1, 13))
        assert [g.bbox[0] for g in gs.glands] == xs
        assert all(g.area == 2100 for g in gs.glands)

    def test_small_objects_counted_but_not_labelled(self):
        """Test blobs under 1400 px stay in the signal count only."""
        shape = (300, 300)
        mask = bar(shape, 20, 20, 150, 14) | bar(shape, 20, 100, 40, 14)
        gs = extract_glands(mask)
        assert len(gs.glands) == 1
        assert gs.n_signal_components == 2

    def test_label_image(self):
        """Test the label image carries each gland's label."""
        shape = (300, 300)
        mask = bar(shape, 20, 20, 150, 14) | bar(shape, 20, 100, 150, 14)
        labels = extract_glands(mask).label_image()
        assert set(np.unique(labels)) == {0, 1, 2}
        assert labels[100, 25] == 1 and labels[100, 105] == 2

    def test_fused_component_is_fragmented(self, dumbbell):
        """Test a component over the N_h limit is split before labelling."""
        mask, _ = dumbbell
        params = GlandParams(max_horizontal_segments=300)
        gs = extract_glands(mask, params)
        assert len(gs.glands) == 2


class TestGlandSignal:
    """Test cases for gland signal segmentation."""

    def test_angle_window(self):
        """Test horizontal blobs go and vertical ones stay."""
        shape = (100, 100)
        vertical = bar(shape, 10, 10, 60, 8)
        horizontal = bar(shape, 80, 20, 8, 60)
        out = keep_upright(vertical | horizontal)
        assert np.array_equal(out, vertical)

    def test_empty_roi_raises(self):
        """Test an empty ROI raises EmptyRoi."""
        curve = fit_bspline([[0, 0], [5, 0], [10, 0]])
        roi = RoiResult(np.zeros((64, 64), bool), curve, curve, 0)
        with pytest.raises(EmptyRoi):
            segment_gland_signal(np.zeros((64, 64), np.uint8), roi)

    def test_phantom_glands_recovered(self, clean_phantom):
        """Test the twelve phantom glands are found and labelled left to right."""
        _, image, truth = clean_phantom
        roi = segment_roi(image)
        signal = segment_gland_signal(image, roi)
        gs = extract_glands(signal)
        assert len(gs.glands) == 12
        xs = [g.centroid[0] for g in gs.glands]
        assert xs == sorted(xs)
        detected = union((g.mask for g in gs.glands), image.shape)
        assert score(truth.gland_signal, detected).k >= 0.85
