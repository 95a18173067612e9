#!/usr/bin/env python3
"""
src/cli.py - Batch front-end for meibography analysis.

Usage:
    python -m src.cli analyze --in images/*.png --out reports/ [--overlay] [--trace]
    python -m src.cli eval --auto auto.png --manual manual.png --out score.json
    python -m src.cli phantom --spec data/phantom_corpus.json --out phantoms/
"""
import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from src.config import DEFAULT_R_MM_PER_PX, REPORT_SCHEMA_VERSION, RunConfig, load_environment
from src.errors import MeiboError
from src.evalseg import score
from src.metrics import analyze
from src.overlay import draw_comparison, draw_overlay, label_glands
from src.phantom import generate, load_specs, truth_to_dict
from src.raster_io import read_gray, read_mask, write_gray, write_mask, write_rgb, write_trace
from src.report import (
    error_entry,
    image_report_to_dict,
    score_to_dict,
    summarize_scores,
    write_csv,
    write_json,
    write_summary,
)
from src.validator import validate_report

logger = logging.getLogger(__name__)

# Exit codes
EXIT_SUCCESS = 0
EXIT_USAGE_ERROR = 1
EXIT_PARTIAL_FAILURE = 2

IMAGE_SUFFIXES = (".png", ".bmp")


def setup_logging(verbose: bool = False, debug: bool = False, env_level: str = None) -> None:
    """Configure logging: --debug > --verbose > MEIBO_LOG > WARNING."""
    if debug:
        level = logging.DEBUG
    elif verbose:
        level = logging.INFO
    elif env_level and isinstance(logging.getLevelName(env_level), int):
        level = logging.getLevelName(env_level)
    else:
        level = logging.WARNING

    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        force=True,
    )


def analyze_path(path: Path, config: RunConfig) -> dict:
    """Analyze one image and write its overlays/trace; failures end up in the record."""
    try:
        img = read_gray(path)
        report = analyze(img, config.r_mm_per_px, trace=config.trace)
    except (MeiboError, OSError, ValueError) as e:
        logger.error(f"{path.name}: {type(e).__name__}: {e}")
        return image_report_to_dict(None, path.name, config.r_mm_per_px, [error_entry(e)])

    stem = path.stem
    if config.overlay:
        masks = [g.mask for g in report.gland_set.glands]
        write_rgb(config.out_dir / f"{stem}_overlay.png", draw_overlay(img, report.roi.roi_mask, masks))
        write_rgb(config.out_dir / f"{stem}_labels.png", label_glands(img, masks))
    if config.trace and report.roi.trace is not None:
        stages = dict(report.roi.trace.stages)
        stages["I_GL"] = report.gland_set.gland_signal
        stages["I_LMG"] = report.gland_set.label_image().clip(0, 255).astype(np.uint8)
        write_trace(config.out_dir / "trace", stem, stages)
    return image_report_to_dict(report, path.name, config.r_mm_per_px)


def expand_inputs(paths: list[str]) -> list[Path]:
    """Replace each directory by its PNG/BMP images, sorted by name."""
    expanded = []
    for p in map(Path, paths):
        if p.is_dir():
            expanded.extend(sorted(f for f in p.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES))
        else:
            expanded.append(p)
    return expanded


def _analyze_job(args) -> dict:
    path, config = args
    return analyze_path(path, config)


def cmd_analyze(config: RunConfig) -> int:
    """
    Analyze every input and write one report per image plus summary.json.

    Returns:
        EXIT_SUCCESS, or EXIT_PARTIAL_FAILURE when any image failed.
    """
    if not config.inputs:
        print("Error: no input images", file=sys.stderr)
        return EXIT_USAGE_ERROR
    config.out_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(path, config) for path in config.inputs]
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            records = list(pool.map(_analyze_job, jobs))
    else:
        records = [_analyze_job(job) for job in jobs]

    for path, record in zip(config.inputs, records):
        is_valid, errors = validate_report(record)
        if not is_valid:
            logger.error(f"Report for {path.name} failed schema validation: {errors}")
        if config.report_format == "csv":
            write_csv(config.out_dir / f"{path.stem}.csv", [record])
        else:
            write_json(config.out_dir / f"{path.stem}.json", record)
    write_summary(config.out_dir / "summary.json", records)

    failed = [r["image"] for r in records if r["errors"]]
    if failed:
        print(f"{len(failed)} of {len(records)} images failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_PARTIAL_FAILURE
    logger.info(f"Analyzed {len(records)} images into {config.out_dir}")
    return EXIT_SUCCESS


def cmd_eval(autos: list[str], manuals: list[str], out: str, overlay: bool = False,
             images: list[str] = None) -> int:
    """Score every (auto, manual) pair and write the scores plus their mean and SD."""
    if len(autos) != len(manuals):
        print("Error: --auto and --manual must be given the same number of times", file=sys.stderr)
        return EXIT_USAGE_ERROR
    images = images or []
    if images and len(images) != len(autos):
        print("Error: --image must be given once per pair", file=sys.stderr)
        return EXIT_USAGE_ERROR

    out_path = Path(out)
    records, scores = [], []
    for index, (auto, manual) in enumerate(zip(autos, manuals)):
        try:
            candidate = read_mask(auto)
            reference = read_mask(manual)
            result = score(reference, candidate)
        except (MeiboError, OSError) as e:
            print(f"Error: {auto} vs {manual}: {e}", file=sys.stderr)
            return EXIT_USAGE_ERROR
        scores.append(result)
        records.append(score_to_dict(result, reference=Path(manual).name, candidate=Path(auto).name))
        logger.info(f"{Path(auto).name}: k={result.k:.4f} r_p={result.r_p:.4f} r_n={result.r_n:.4f}")

        if overlay:
            if images:
                background = read_gray(images[index])
            else:
                background = np.full(reference.shape, 128, dtype=np.uint8)
            target = out_path.with_name(f"{out_path.stem}_{index + 1:02d}_comparison.png")
            write_rgb(target, draw_comparison(background, reference, candidate))

    write_json(out_path, {
        "schema_version": REPORT_SCHEMA_VERSION,
        "pairs": records,
        "summary": summarize_scores(scores),
    })
    print(f"k = {records[0]['k']:.4f}" if len(records) == 1 else
          f"{len(records)} pairs scored, mean k = {summarize_scores(scores)['k_mean']:.4f}")
    return EXIT_SUCCESS


def cmd_phantom(spec_path: str, out_dir: str) -> int:
    """Generate every phantom in the spec file: image, truth masks and truth metrics."""
    try:
        specs = load_specs(spec_path)
    except (OSError, ValueError) as e:
        print(f"Error: cannot load phantom spec {spec_path}: {e}", file=sys.stderr)
        return EXIT_USAGE_ERROR

    out = Path(out_dir)
    names = [s.name for s in specs]
    for index, spec in enumerate(specs, start=1):
        name = spec.name if names.count(spec.name) == 1 else f"{spec.name}_{index:02d}"
        try:
            image, truth = generate(spec)
        except MeiboError as e:
            print(f"Error: phantom '{name}': {e.code}: {e}", file=sys.stderr)
            return EXIT_USAGE_ERROR

        labels = np.zeros(image.shape, dtype=np.uint8)
        for label, mask in enumerate(truth.gland_masks, start=1):
            labels[mask] = min(label, 255)
        write_gray(out / f"{name}.png", image)
        write_mask(out / f"{name}_roi.png", truth.roi_mask)
        write_mask(out / f"{name}_glands.png", truth.gland_signal)
        write_gray(out / f"{name}_gland_labels.png", labels)
        write_json(out / f"{name}_truth.json", truth_to_dict(spec, truth))
    logger.info(f"Wrote {len(specs)} phantoms to {out}")
    return EXIT_SUCCESS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Segment meibography images and measure meibomian gland morphology",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m src.cli analyze --in lid1.bmp lid2.bmp --out reports --overlay
  python -m src.cli analyze --in images/*.png --out reports --format csv --jobs 4
  python -m src.cli eval --auto auto_roi.png --manual manual_roi.png --out roi_score.json
  python -m src.cli phantom --spec data/phantom_corpus.json --out phantoms
        """
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose output")
    parser.add_argument("--debug", action="store_true", help="Enable debug output")
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="Segment images and compute gland metrics")
    p_analyze.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="PATH",
                           help="Input PNG/BMP images")
    p_analyze.add_argument("--out", required=True, metavar="DIR", help="Output directory")
    p_analyze.add_argument("--r-mm-per-px", type=float, default=None,
                           help=f"Image resolution in mm/pixel (default {DEFAULT_R_MM_PER_PX})")
    p_analyze.add_argument("--format", choices=["json", "csv"], default="json", help="Report format")
    p_analyze.add_argument("--overlay", action="store_true", help="Write contour and label overlays")
    p_analyze.add_argument("--trace", action="store_true", help="Write every intermediate stage")
    p_analyze.add_argument("--jobs", type=int, default=1, help="Images processed in parallel")

    p_eval = sub.add_parser("eval", help="Score automatic masks against manual references")
    p_eval.add_argument("--auto", action="append", required=True, metavar="MASK", help="Automatic mask")
    p_eval.add_argument("--manual", action="append", required=True, metavar="MASK", help="Reference mask")
    p_eval.add_argument("--image", action="append", metavar="IMAGE", help="Source image for --overlay")
    p_eval.add_argument("--out", required=True, metavar="FILE", help="Score JSON file")
    p_eval.add_argument("--overlay", action="store_true", help="Write reference/automatic contour overlays")

    p_phantom = sub.add_parser("phantom", help="Generate synthetic phantoms with ground truth")
    p_phantom.add_argument("--spec", required=True, metavar="FILE", help="Phantom spec or corpus JSON")
    p_phantom.add_argument("--out", required=True, metavar="DIR", help="Output directory")
    return parser


def main(argv=None) -> int:
    """
    Main CLI entry point.

    Args:
        argv: Command line arguments (defaults to sys.argv[1:])

    Returns:
        Exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_SUCCESS if e.code == 0 else EXIT_USAGE_ERROR

    env = load_environment()
    setup_logging(verbose=args.verbose, debug=args.debug, env_level=env["log_level"])

    try:
        if args.command == "analyze":
            r_value = args.r_mm_per_px
            if r_value is None:
                r_value = env["r_mm_per_px"] or DEFAULT_R_MM_PER_PX
            config = RunConfig(
                inputs=expand_inputs(args.inputs),
                out_dir=Path(args.out),
                r_mm_per_px=r_value,
                report_format=args.format,
                overlay=args.overlay,
                trace=args.trace,
                jobs=args.jobs,
            )
            return cmd_analyze(config)
        if args.command == "eval":
            return cmd_eval(args.auto, args.manual, args.out, overlay=args.overlay, images=args.image)
        return cmd_phantom(args.spec, args.out)
    except ValidationError as e:
        print(f"Error: invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
