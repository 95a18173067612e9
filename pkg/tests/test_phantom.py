"""
tests/test_phantom.py - Unit tests for the synthetic phantom generator.
"""
import json
import math
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import SpecInfeasible
from src.phantom import (
    LASH_SPACING,
    GlandSpec,
    PhantomSpec,
    _lash_roots,
    generate,
    gland_truth,
    layout_glands,
    load_specs,
    truth_to_dict,
)


def single_gland_spec(**gland) -> PhantomSpec:
    defaults = {"base_x": 544.5, "top": 150, "length": 200}
    defaults.update(gland)
    return PhantomSpec(name="single", glands=[GlandSpec(**defaults)])


class TestGenerate:
    """Test cases for generate."""

    def test_native_size(self, clean_phantom):
        """Test the default raster is 1088x512 grey."""
        _, image, _ = clean_phantom
        assert image.shape == (512, 1088)
        assert image.dtype == np.uint8

    def test_deterministic(self):
        """Test the same spec and seed give the same image."""
        spec = PhantomSpec(gland_count=8, noise_sigma=5.0, lash_count=3, seed=42)
        a, _ = generate(spec)
        b, _ = generate(spec)
        assert np.array_equal(a, b)

    def test_seed_changes_noise(self):
        """Test a different seed gives a different noisy image."""
        a, _ = generate(PhantomSpec(gland_count=8, noise_sigma=5.0, seed=1))
        b, _ = generate(PhantomSpec(gland_count=8, noise_sigma=5.0, seed=2))
        assert not np.array_equal(a, b)

    def test_masks_disjoint_and_inside_roi(self, clean_phantom):
        """Test gland masks never overlap and stay inside the eyelid."""
        _, _, truth = clean_phantom
        assert len(truth.gland_masks) == 12
        stacked = np.sum(truth.gland_masks, axis=0)
        assert stacked.max() == 1
        assert not (truth.gland_signal & ~truth.roi_mask).any()

    def test_straight_glands_truth(self, clean_phantom):
        """Test straight constant-width glands have TI = DI = 0 and exact pixel areas."""
        spec, _, truth = clean_phantom
        for mask, gland in zip(truth.gland_masks, truth.glands):
            assert gland.tortuosity == 0.0
            assert gland.deformation_mm == pytest.approx(0.0, abs=1e-12)
            assert gland.width_mm == pytest.approx(14.0 * spec.r_mm_per_px)
            assert int(mask.sum()) == pytest.approx(gland.area_px, rel=1e-6)

    def test_ga_analytic_matches_pixels(self, clean_phantom):
        """Test the analytic and pixel-counted GA agree."""
        _, _, truth = clean_phantom
        assert truth.ga == pytest.approx(truth.ga_pixels, abs=0.5)
        assert truth.roi_area == pytest.approx(truth.roi_mask.sum(), rel=0.01)

    def test_signal_index_exact(self, clean_phantom):
        """Test the truth SI of the noise-free render equals lg(G / B) exactly."""
        _, _, truth = clean_phantom
        assert truth.si_analytic == pytest.approx(math.log10(150.0 / 110.0))
        assert truth.si == truth.si_analytic

    def test_clean_render_is_three_level(self, clean_phantom):
        """Test the clean render holds only surround, eyelid and gland intensities."""
        _, _, truth = clean_phantom
        assert set(np.unique(truth.clean).tolist()) == {55, 110, 150}
        assert (truth.clean[truth.gland_signal] == 150).all()
        assert (truth.clean[truth.roi_mask & ~truth.gland_signal] == 110).all()

    def test_signal_index_ignores_observation(self):
        """Test illumination, lashes and noise leave the truth SI exact."""
        spec = PhantomSpec(gland_count=8, illumination=0.2, lash_count=4, noise_sigma=6.0, seed=5)
        _, truth = generate(spec)
        assert truth.si == truth.si_analytic

    def test_lash_roots_spaced(self):
        """Test lash roots keep their minimum spacing."""
        spec = PhantomSpec(lash_count=8)
        roots = sorted(_lash_roots(spec, np.random.default_rng(3)))
        assert len(roots) == 8
        assert np.diff(roots).min() >= LASH_SPACING

    def test_lashes_only_touch_the_observed_image(self, noisy_phantom):
        """Test the clean render stays free of lashes and noise."""
        _, image, truth = noisy_phantom
        assert not np.array_equal(image, truth.clean)
        assert truth.clean.min() >= 50

    def test_fused_pair_bridges_signal(self):
        """Test a fused pair adds bridge pixels outside every gland mask."""
        _, truth = generate(PhantomSpec(gland_count=10, fused_pairs=[3]))
        claimed = np.any(truth.gland_masks, axis=0)
        assert (truth.gland_signal & ~claimed).sum() > 0


class TestGlandTruth:
    """Test cases for analytic gland metrics."""

    def test_sinusoid_arc_length(self):
        """Test L matches a dense polyline of the centerline."""
        g = GlandSpec(base_x=500.5, top=100, length=240, amplitude=6.0, period=160.0)
        truth = gland_truth(g, 1, 0.03)
        y = np.linspace(99.5, 339.5, 200001)
        x = g.base_x + g.amplitude * np.sin(2 * np.pi * (y - g.top) / g.period + g.phase)
        polyline = np.hypot(np.diff(x), np.diff(y)).sum()
        assert truth.length_mm == pytest.approx(0.03 * polyline, rel=1e-5)
        assert truth.tortuosity > 0

    def test_step_width_deformation(self):
        """Test a step of +-delta gives DI = delta x R."""
        g = GlandSpec(base_x=500.5, top=100, length=200, width_model="step", width_delta=2.0)
        truth = gland_truth(g, 1, 0.03)
        assert truth.width_mm == pytest.approx(14.0 * 0.03)
        assert truth.deformation_mm == pytest.approx(2.0 * 0.03, rel=1e-4)

    def test_taper_width_deformation(self):
        """Test a linear taper over [w - d, w + d] gives DI = d / sqrt(3) x R."""
        g = GlandSpec(base_x=500.5, top=100, length=200, width_model="taper", width_delta=3.0)
        truth = gland_truth(g, 1, 0.03)
        assert truth.deformation_mm == pytest.approx(3.0 / math.sqrt(3.0) * 0.03, rel=1e-4)

    def test_layout_is_even(self):
        """Test auto-layout spacing and left-to-right order."""
        glands = layout_glands(PhantomSpec(gland_count=10))
        xs = [g.base_x for g in glands]
        assert xs == sorted(xs)
        gaps = np.diff(xs)
        assert gaps.max() - gaps.min() < 2.0


class TestInfeasible:
    """Test cases for rejected specs."""

    def test_glands_not_brighter(self):
        """Test glands darker than the background are rejected."""
        with pytest.raises(SpecInfeasible):
            generate(PhantomSpec(gland_count=4, gland_intensity=100.0, background_intensity=110.0))

    def test_overlapping_glands(self):
        """Test two ribbons sharing pixels are rejected."""
        spec = PhantomSpec(glands=[
            GlandSpec(base_x=500.5, top=150, length=200),
            GlandSpec(base_x=505.5, top=150, length=200),
        ])
        with pytest.raises(SpecInfeasible):
            generate(spec)

    def test_gland_touching_eyelid(self):
        """Test a ribbon reaching the eyelid contour is rejected."""
        with pytest.raises(SpecInfeasible):
            generate(single_gland_spec(top=86, length=100))

    def test_gland_leaving_image(self):
        """Test a ribbon past the last row is rejected."""
        with pytest.raises(SpecInfeasible):
            generate(single_gland_spec(top=400, length=200))

    def test_fused_index_out_of_range(self):
        """Test a fused pair index beyond the last neighbour pair is rejected."""
        with pytest.raises(SpecInfeasible):
            generate(PhantomSpec(gland_count=6, fused_pairs=[5]))

    def test_full_illumination_rejected(self):
        """Test an illumination gradient of 1 fails validation."""
        with pytest.raises(ValidationError):
            PhantomSpec(illumination=1.0)


class TestSpecFiles:
    """Test cases for loading and serializing specs."""

    def test_corpus_file(self):
        """Test the bundled corpus loads twenty specs with unique names."""
        specs = load_specs(Path(__file__).resolve().parent.parent / "data" / "phantom_corpus.json")
        assert len(specs) == 20
        assert len({s.name for s in specs}) == 20

    def test_single_spec_file(self, tmp_path):
        """Test a bare spec object loads as a one-element list."""
        path = tmp_path / "one.json"
        path.write_text(json.dumps({"name": "solo", "gland_count": 5}))
        specs = load_specs(path)
        assert [s.name for s in specs] == ["solo"]
        assert specs[0].gland_count == 5

    def test_truth_dict(self, clean_phantom):
        """Test the truth record carries per-gland analytic values."""
        spec, _, truth = clean_phantom
        record = truth_to_dict(spec, truth)
        assert record["name"] == "clean"
        assert len(record["glands"]) == 12
        assert record["glands"][0]["TI"] == 0.0
        assert record["roi"]["pixel_count"] == int(truth.roi_mask.sum())
