# main.py - Phantom corpus acceptance run
import argparse
import logging
import sys
from pathlib import Path

from src.evalseg import score, union
from src.metrics import analyze
from src.phantom import PhantomSpec, generate, load_specs
from src.report import image_report_to_dict, write_json

logger = logging.getLogger(__name__)

ROI_K_MIN = 0.90
GLAND_K_MIN = 0.85


def process_phantom(spec: PhantomSpec, out_dir: Path) -> bool:
    """Generate one phantom, analyze it and score ROI and glands against truth."""
    image, truth = generate(spec)
    report = analyze(image, spec.r_mm_per_px)

    roi_k = score(truth.roi_mask, report.roi.roi_mask).k
    detected = union((g.mask for g in report.gland_set.glands), image.shape)
    gland_k = score(truth.gland_signal, detected).k
    count_ok = bool(spec.fused_pairs) or len(report.gland_set.glands) == len(truth.gland_masks)

    passed = roi_k >= ROI_K_MIN and gland_k >= GLAND_K_MIN and count_ok
    mark = "PASS" if passed else "FAIL"
    print(f"{mark}  {spec.name:<24} ROI k={roi_k:.3f}  glands k={gland_k:.3f}  "
          f"count {len(report.gland_set.glands)}/{len(truth.gland_masks)}  "
          f"GA {report.ga_percent:.2f}% (truth {truth.ga:.2f}%)")

    record = image_report_to_dict(report, f"{spec.name}.png", spec.r_mm_per_px)
    write_json(out_dir / f"{spec.name}.json", record)
    return passed


def run_corpus(corpus_path="data/phantom_corpus.json", out_dir="data/corpus_reports") -> tuple[int, int]:
    """Process all phantoms of the corpus; returns (passed, total)."""
    specs = load_specs(corpus_path)
    out = Path(out_dir)

    print("=" * 60)
    print(f"Phantom corpus: {len(specs)} specs from {corpus_path}")
    print("=" * 60)

    passed = sum(process_phantom(spec, out) for spec in specs)

    print("=" * 60)
    print(f"Results: {passed}/{len(specs)} phantoms passed")
    print("=" * 60)
    return passed, len(specs)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run the phantom acceptance corpus")
    parser.add_argument("--corpus", default="data/phantom_corpus.json")
    parser.add_argument("--out", default="data/corpus_reports")
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    passed, total = run_corpus(args.corpus, args.out)
    sys.exit(0 if passed == total else 2)
