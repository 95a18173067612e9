"""
src/validator.py - Schema validator for image reports.
"""
import logging

import jsonschema

from src.config import REPORT_SCHEMA_VERSION

logger = logging.getLogger(__name__)

_NUMBER_OR_NULL = {"type": ["number", "null"]}

GLAND_SCHEMA = {
    "type": "object",
    "required": ["label", "area_px", "L_mm", "D_mm", "DI_mm", "TI", "flags"],
    "properties": {
        "label": {"type": "integer", "minimum": 1},
        "area_px": {"type": "integer", "minimum": 1},
        "L_mm": {"type": ["number", "null"], "minimum": 0},
        "D_mm": {"type": ["number", "null"], "minimum": 0},
        "DI_mm": {"type": ["number", "null"], "minimum": 0},
        "TI": {"type": ["number", "null"], "minimum": 0},
        "flags": {"type": "array", "items": {"type": "string"}},
    },
    "additionalProperties": False,
}

AGGREGATE_KEYS = [f"{m}_{s}" for m in ("L", "D", "DI", "TI") for s in ("mean", "sd")]

REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "schema_version", "image", "R_mm_per_px", "roi", "GA_percent", "SI",
        "SI_scaled", "glands", "aggregates", "errors",
    ],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "image": {"type": "string"},
        "R_mm_per_px": {"type": "number", "exclusiveMinimum": 0},
        "roi": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["area_px"],
                    "properties": {"area_px": {"type": "integer", "minimum": 0}},
                },
            ]
        },
        "GA_percent": {"type": ["number", "null"], "minimum": 0, "maximum": 100},
        "SI": _NUMBER_OR_NULL,
        "SI_scaled": _NUMBER_OR_NULL,
        "n_signal_components": {"type": "integer", "minimum": 0},
        "glands": {"type": "array", "items": GLAND_SCHEMA},
        "aggregates": {
            "type": "object",
            "required": AGGREGATE_KEYS,
            "properties": {key: _NUMBER_OR_NULL for key in AGGREGATE_KEYS},
            "additionalProperties": False,
        },
        "flags": {"type": "array", "items": {"type": "string"}},
        "errors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["code", "message"],
                "properties": {"code": {"type": "string"}, "message": {"type": "string"}},
            },
        },
    },
    "additionalProperties": False,
}


def validate_report(report: dict) -> tuple[bool, list[str]]:
    """
    Validate an image report against REPORT_SCHEMA.

    Returns:
        Tuple of (is_valid, errors) where errors lists every violation
        (empty if valid).
    """
    if report is None:
        return False, ["report cannot be None"]

    if not isinstance(report, dict):
        return False, [f"report must be a dictionary, got {type(report).__name__}"]

    validator = jsonschema.Draft7Validator(REPORT_SCHEMA)
    errors = []
    for error in sorted(validator.iter_errors(report), key=lambda e: [str(p) for p in e.absolute_path]):
        where = "/".join(str(p) for p in error.absolute_path) or "<root>"
        errors.append(f"{where}: {error.message}")
    if errors:
        logger.debug(f"Report failed validation with {len(errors)} errors")
    return len(errors) == 0, errors
