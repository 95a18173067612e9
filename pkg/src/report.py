"""
src/report.py - Machine-readable reports for analyze and eval runs.

Every float is rounded to 4 decimals and keys keep a fixed order, so identical
inputs give byte-identical files.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from src.config import REPORT_SCHEMA_VERSION
from src.evalseg import SegScore
from src.metrics import METRIC_FIELDS, ImageReport

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["image", "label", "area_px", "L_mm", "D_mm", "DI_mm", "TI", "flags"]


def r4(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    if np.isnan(value) or np.isinf(value):
        return None
    rounded = round(value, 4)
    # avoid "-0.0" in the output
    return 0.0 if rounded == 0 else rounded


def _empty_aggregates() -> dict:
    return {f"{name}_{stat}": None for name in METRIC_FIELDS for stat in ("mean", "sd")}


def image_report_to_dict(report: Optional[ImageReport], image_name: str, r_mm_per_px: float,
                         errors: Optional[list[dict]] = None) -> dict:
    """Report record for one image; `report` is None when the image failed."""
    record = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "image": image_name,
        "R_mm_per_px": r4(r_mm_per_px),
        "roi": None,
        "GA_percent": None,
        "SI": None,
        "SI_scaled": None,
        "n_signal_components": 0,
        "glands": [],
        "aggregates": _empty_aggregates(),
        "flags": [],
        "errors": list(errors or []),
    }
    if report is None:
        return record

    record.update({
        "roi": {"area_px": int(report.roi_area)},
        "GA_percent": r4(report.ga_percent),
        "SI": r4(report.si),
        "SI_scaled": r4(report.si_scaled),
        "n_signal_components": int(report.n_signal_components),
        "glands": [
            {
                "label": g.label,
                "area_px": g.area,
                "L_mm": r4(g.length_mm),
                "D_mm": r4(g.width_mm),
                "DI_mm": r4(g.deformation_mm),
                "TI": r4(g.tortuosity),
                "flags": list(g.flags),
            }
            for g in report.glands
        ],
        "aggregates": {key: r4(value) for key, value in report.aggregates.items()},
        "flags": list(report.flags),
    })
    return record


def error_entry(exc: Exception) -> dict:
    code = getattr(exc, "code", type(exc).__name__)
    return {"code": code, "message": str(exc)}


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    return path


def write_csv(path, records: Iterable[dict]) -> Path:
    """Flattened per-gland table; images without glands contribute no rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for record in records:
            for g in record["glands"]:
                writer.writerow([
                    record["image"], g["label"], g["area_px"],
                    *("" if g[k] is None else f"{g[k]:.4f}" for k in ("L_mm", "D_mm", "DI_mm", "TI")),
                    ";".join(g["flags"]),
                ])
    return path


def _mean(values: list) -> Optional[float]:
    values = [v for v in values if v is not None]
    return r4(np.mean(values)) if values else None


def summarize_records(records: list[dict]) -> dict:
    """Batch summary: per-image GA/SI table plus means across successful images."""
    ok = [r for r in records if not r["errors"]]
    means = {
        "GA_percent": _mean([r["GA_percent"] for r in ok]),
        "SI": _mean([r["SI"] for r in ok]),
    }
    for name in METRIC_FIELDS:
        means[f"{name}_mean"] = _mean([r["aggregates"][f"{name}_mean"] for r in ok])
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "n_images": len(records),
        "n_failed": len(records) - len(ok),
        "images": [
            {
                "image": r["image"],
                "GA_percent": r["GA_percent"],
                "SI": r["SI"],
                "n_glands": len(r["glands"]),
                "errors": [e["code"] for e in r["errors"]],
            }
            for r in records
        ],
        "means": means,
    }


def write_summary(path, records: list[dict]) -> Path:
    return write_json(path, summarize_records(records))


def score_to_dict(score: SegScore, reference: str = "", candidate: str = "") -> dict:
    return {
        "reference": reference,
        "candidate": candidate,
        "k": r4(score.k),
        "r_p": r4(score.r_p),
        "r_n": r4(score.r_n),
        "reference_area_px": score.reference_area,
        "candidate_area_px": score.candidate_area,
        "overlap_area_px": score.overlap_area,
    }


def summarize_scores(scores: list[SegScore]) -> dict:
    """Mean and population SD of k, r_p and r_n over a set of scored pairs."""
    out: dict = {"n": len(scores)}
    for name in ("k", "r_p", "r_n"):
        values = [getattr(s, name) for s in scores]
        out[f"{name}_mean"] = r4(np.mean(values)) if values else None
        out[f"{name}_sd"] = r4(np.std(values)) if values else None
    return out
