"""
tests/test_cli.py - Unit tests for the CLI module.

Uses tmp_path fixture to test file output functionality.
"""
import json

import numpy as np
import pytest

from src.cli import EXIT_PARTIAL_FAILURE, EXIT_SUCCESS, EXIT_USAGE_ERROR, main
from src.config import RunConfig
from src.raster_io import read_gray, read_mask, write_gray, write_mask


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    """One small-count phantom written through the phantom command."""
    out = tmp_path_factory.mktemp("phantoms")
    spec = out / "spec.json"
    spec.write_text(json.dumps({"name": "lid", "gland_count": 10, "seed": 3}))
    assert main(["phantom", "--spec", str(spec), "--out", str(out)]) == EXIT_SUCCESS
    return out


class TestCLIPhantom:
    """Test the phantom command."""

    def test_outputs_written(self, phantom_dir):
        """Test image, masks and truth are all written."""
        for suffix in (".png", "_roi.png", "_glands.png", "_gland_labels.png", "_truth.json"):
            assert (phantom_dir / f"lid{suffix}").exists()
        assert read_gray(phantom_dir / "lid.png").shape == (512, 1088)

        truth = json.loads((phantom_dir / "lid_truth.json").read_text())
        assert truth["name"] == "lid"
        assert len(truth["glands"]) == 10

    def test_label_raster(self, phantom_dir):
        """Test gland labels run 1..n."""
        labels = read_gray(phantom_dir / "lid_gland_labels.png")
        assert set(np.unique(labels)) == set(range(11))

    def test_duplicate_names_get_index(self, tmp_path):
        """Test specs sharing a name are written under indexed names."""
        spec = tmp_path / "corpus.json"
        spec.write_text(json.dumps({"specs": [
            {"name": "twin", "gland_count": 4},
            {"name": "twin", "gland_count": 6},
        ]}))
        assert main(["phantom", "--spec", str(spec), "--out", str(tmp_path / "out")]) == EXIT_SUCCESS
        assert (tmp_path / "out" / "twin_01.png").exists()
        assert (tmp_path / "out" / "twin_02.png").exists()

    def test_infeasible_spec(self, tmp_path, capsys):
        """Test an infeasible spec exits with a usage error."""
        spec = tmp_path / "bad.json"
        spec.write_text(json.dumps({"gland_intensity": 90.0, "background_intensity": 110.0}))
        assert main(["phantom", "--spec", str(spec), "--out", str(tmp_path)]) == EXIT_USAGE_ERROR
        assert "SpecInfeasible" in capsys.readouterr().err

    def test_missing_spec(self, tmp_path):
        """Test a missing spec file exits with a usage error."""
        assert main(["phantom", "--spec", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_USAGE_ERROR


class TestCLIAnalyze:
    """Test the analyze command."""

    def test_phantom_report(self, phantom_dir, tmp_path):
        """Test a phantom is analyzed into a report and a summary."""
        out = tmp_path / "reports"
        code = main(["analyze", "--in", str(phantom_dir / "lid.png"), "--out", str(out), "--overlay"])
        assert code == EXIT_SUCCESS

        report = json.loads((out / "lid.json").read_text())
        assert report["errors"] == []
        assert report["R_mm_per_px"] == 0.03
        assert len(report["glands"]) == 10
        assert 0 < report["GA_percent"] < 100
        assert (out / "lid_overlay.png").exists()
        assert (out / "lid_labels.png").exists()

        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_images"] == 1
        assert summary["n_failed"] == 0

    def test_r_scales_lengths(self, phantom_dir, tmp_path):
        """Test --r-mm-per-px scales every length."""
        image = str(phantom_dir / "lid.png")
        main(["analyze", "--in", image, "--out", str(tmp_path / "a"), "--r-mm-per-px", "0.03"])
        main(["analyze", "--in", image, "--out", str(tmp_path / "b"), "--r-mm-per-px", "0.06"])
        a = json.loads((tmp_path / "a" / "lid.json").read_text())
        b = json.loads((tmp_path / "b" / "lid.json").read_text())
        assert b["GA_percent"] == a["GA_percent"]
        assert b["aggregates"]["L_mean"] == pytest.approx(2 * a["aggregates"]["L_mean"], abs=2e-4)

    def test_csv_format(self, phantom_dir, tmp_path):
        """Test --format csv writes one row per gland."""
        out = tmp_path / "csv"
        assert main(["analyze", "--in", str(phantom_dir / "lid.png"), "--out", str(out),
                     "--format", "csv"]) == EXIT_SUCCESS
        lines = (out / "lid.csv").read_text().splitlines()
        assert lines[0] == "image,label,area_px,L_mm,D_mm,DI_mm,TI,flags"
        assert len(lines) == 11

    def test_trace_stages(self, phantom_dir, tmp_path):
        """Test --trace writes every intermediate stage."""
        out = tmp_path / "trace"
        main(["analyze", "--in", str(phantom_dir / "lid.png"), "--out", str(out), "--trace"])
        written = sorted(p.name for p in (out / "trace").iterdir())
        assert len(written) == 10
        assert written[0] == "lid_01_I_M.png"
        assert written[-1] == "lid_10_I_LMG.png"

    def test_deterministic(self, phantom_dir, tmp_path):
        """Test the same input gives byte-identical reports and overlays."""
        image = str(phantom_dir / "lid.png")
        main(["analyze", "--in", image, "--out", str(tmp_path / "one"), "--overlay"])
        main(["analyze", "--in", image, "--out", str(tmp_path / "two"), "--overlay"])
        for name in ("lid.json", "lid_overlay.png", "lid_labels.png"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_blank_image_partial_failure(self, tmp_path, capsys):
        """Test a blank image is reported as failed with exit code 2."""
        blank = write_gray(tmp_path / "blank.png", np.full((128, 128), 90, np.uint8))
        out = tmp_path / "out"
        assert main(["analyze", "--in", str(blank), "--out", str(out)]) == EXIT_PARTIAL_FAILURE
        report = json.loads((out / "blank.json").read_text())
        assert report["errors"][0]["code"] == "NoEyelidDetected"
        assert report["GA_percent"] is None
        assert "1 of 1 images failed" in capsys.readouterr().err

    def test_missing_image_partial_failure(self, tmp_path):
        """Test a missing file is recorded and the batch continues."""
        out = tmp_path / "out"
        assert main(["analyze", "--in", str(tmp_path / "gone.png"), "--out", str(out)]) == EXIT_PARTIAL_FAILURE
        assert json.loads((out / "summary.json").read_text())["n_failed"] == 1

    def test_directory_input(self, tmp_path):
        """Test a directory expands to its image files only."""
        images = tmp_path / "images"
        images.mkdir()
        write_gray(images / "b.png", np.full((128, 128), 90, np.uint8))
        write_gray(images / "a.bmp", np.full((128, 128), 90, np.uint8))
        (images / "notes.txt").write_text("not an image")
        out = tmp_path / "out"
        assert main(["analyze", "--in", str(images), "--out", str(out)]) == EXIT_PARTIAL_FAILURE
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_images"] == 2
        assert (out / "a.json").exists()
        assert (out / "b.json").exists()

    def test_empty_directory(self, tmp_path):
        """Test a directory without images is a usage error."""
        (tmp_path / "empty").mkdir()
        assert main(["analyze", "--in", str(tmp_path / "empty"), "--out", str(tmp_path / "out")]) == EXIT_USAGE_ERROR

    def test_bad_r_value(self, tmp_path):
        """Test a non-positive resolution is a usage error."""
        blank = write_gray(tmp_path / "blank.png", np.full((128, 128), 90, np.uint8))
        code = main(["analyze", "--in", str(blank), "--out", str(tmp_path), "--r-mm-per-px", "0"])
        assert code == EXIT_USAGE_ERROR


class TestCLIEval:
    """Test the eval command."""

    def test_score_pair(self, tmp_path, capsys):
        """Test one pair is scored and summarized."""
        reference = np.zeros((8, 8), bool)
        candidate = np.zeros((8, 8), bool)
        reference[0:4, 0:4] = True
        candidate[2:4, 0:4] = True
        write_mask(tmp_path / "manual.png", reference)
        write_mask(tmp_path / "auto.png", candidate)
        out = tmp_path / "score.json"

        code = main(["eval", "--auto", str(tmp_path / "auto.png"), "--manual", str(tmp_path / "manual.png"),
                     "--out", str(out)])
        assert code == EXIT_SUCCESS
        data = json.loads(out.read_text())
        assert data["pairs"][0]["k"] == round(2 / 3, 4)
        assert data["pairs"][0]["r_n"] == 50.0
        assert data["summary"]["n"] == 1
        assert "k = 0.6667" in capsys.readouterr().out

    def test_comparison_overlay(self, tmp_path):
        """Test --overlay writes a comparison image per pair."""
        mask = np.zeros((8, 8), bool)
        mask[2:6, 2:6] = True
        write_mask(tmp_path / "m.png", mask)
        out = tmp_path / "score.json"
        main(["eval", "--auto", str(tmp_path / "m.png"), "--manual", str(tmp_path / "m.png"),
              "--out", str(out), "--overlay"])
        assert (tmp_path / "score_01_comparison.png").exists()
        assert read_mask(tmp_path / "m.png").sum() == 16

    def test_unpaired_arguments(self, tmp_path):
        """Test unequal --auto and --manual counts are rejected."""
        code = main(["eval", "--auto", "a.png", "--auto", "b.png", "--manual", "m.png",
                     "--out", str(tmp_path / "s.json")])
        assert code == EXIT_USAGE_ERROR

    def test_missing_mask(self, tmp_path):
        """Test a missing mask file exits with a usage error."""
        code = main(["eval", "--auto", str(tmp_path / "a.png"), "--manual", str(tmp_path / "m.png"),
                     "--out", str(tmp_path / "s.json")])
        assert code == EXIT_USAGE_ERROR

    def test_shape_mismatch(self, tmp_path):
        """Test masks of different sizes exit with a usage error."""
        write_mask(tmp_path / "a.png", np.ones((8, 8), bool))
        write_mask(tmp_path / "m.png", np.ones((8, 9), bool))
        code = main(["eval", "--auto", str(tmp_path / "a.png"), "--manual", str(tmp_path / "m.png"),
                     "--out", str(tmp_path / "s.json")])
        assert code == EXIT_USAGE_ERROR


class TestCLIUsage:
    """Test argument handling."""

    def test_no_command(self):
        """Test a missing subcommand is a usage error."""
        assert main([]) == EXIT_USAGE_ERROR

    def test_help(self, capsys):
        """Test --help exits cleanly."""
        assert main(["--help"]) == EXIT_SUCCESS
        assert "analyze" in capsys.readouterr().out

    def test_verbose_flag(self, tmp_path):
        """Test -v is accepted before the subcommand."""
        mask = np.ones((4, 4), bool)
        write_mask(tmp_path / "m.png", mask)
        code = main(["-v", "eval", "--auto", str(tmp_path / "m.png"), "--manual", str(tmp_path / "m.png"),
                     "--out", str(tmp_path / "s.json")])
        assert code == EXIT_SUCCESS


class TestRunConfig:
    """Test the batch options model."""

    def test_fields(self):
        """Test only the options the commands read are declared."""
        assert set(RunConfig.model_fields) == {
            "inputs", "out_dir", "r_mm_per_px", "report_format", "overlay", "trace", "jobs",
        }

    def test_inputs_sorted(self, tmp_path):
        """Test inputs are kept in path order."""
        config = RunConfig(inputs=[tmp_path / "b.png", tmp_path / "a.png"])
        assert [p.name for p in config.inputs] == ["a.png", "b.png"]
