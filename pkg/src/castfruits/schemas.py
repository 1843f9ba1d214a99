"""Published JSON schemas for every report the tool emits."""

from __future__ import annotations

import jsonschema

_STAGE_ROW = {
    "type": "object",
    "required": ["stage", "iteration", "identities", "faces"],
    "properties": {
        "stage": {"type": "string"},
        "iteration": {"type": "integer", "minimum": 0},
        "identities": {"type": "integer", "minimum": 0},
        "faces": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

STAGE_STATS = {
    "type": "object",
    "required": ["stages"],
    "properties": {"stages": {"type": "array", "items": _STAGE_ROW, "minItems": 1}},
    "additionalProperties": False,
}

HISTOGRAMS = {
    "type": "object",
    "required": ["iterations"],
    "properties": {
        "iterations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["iteration", "bin_edges", "intra_counts", "inter_counts", "overlap"],
                "properties": {
                    "iteration": {"type": "integer", "minimum": 1},
                    "bin_edges": {"type": "array", "items": {"type": "number"}},
                    "intra_counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "inter_counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "overlap": {"type": "number", "minimum": 0, "maximum": 1},
                },
                "additionalProperties": False,
            },
        }
    },
    "additionalProperties": False,
}

CLEAN_SUMMARY = {
    "type": "object",
    "required": ["input_faces", "input_identities", "output_faces", "output_identities",
                 "iterations", "overlaps", "stages", "seed"],
    "properties": {
        "input_faces": {"type": "integer"},
        "input_identities": {"type": "integer"},
        "output_faces": {"type": "integer"},
        "output_identities": {"type": "integer"},
        "iterations": {"type": "integer"},
        "overlaps": {"type": "array", "items": {"type": "number"}},
        "stages": {"type": "array", "items": _STAGE_ROW},
        "seed": {"type": "integer"},
        "scores": {"type": ["object", "null"]},
    },
    "additionalProperties": False,
}

VERIFY_REPORT = {
    "type": "object",
    "required": ["fmr_targets", "seed", "slices"],
    "properties": {
        "fmr_targets": {"type": "array", "items": {"type": "number"}},
        "seed": {"type": "integer"},
        "slices": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["genuine_count", "impostor_count", "scored_genuine",
                             "scored_impostor", "impostor_subsampled", "fnmr_at", "curve"],
                "properties": {
                    "genuine_count": {"type": "integer", "minimum": 0},
                    "impostor_count": {"type": "integer", "minimum": 0},
                    "scored_genuine": {"type": "integer", "minimum": 0},
                    "scored_impostor": {"type": "integer", "minimum": 0},
                    "impostor_subsampled": {"type": "boolean"},
                    "curve": {
                        "type": "object",
                        "required": ["threshold", "fmr", "fnmr"],
                        "properties": {
                            "threshold": {"type": "array", "items": {"type": "number"}},
                            "fmr": {"type": "array", "items": {"type": "number"}},
                            "fnmr": {"type": "array", "items": {"type": "number"}},
                        },
                        "additionalProperties": False,
                    },
                    "fnmr_at": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["threshold", "fnmr"],
                            "properties": {
                                "threshold": {"type": "number"},
                                "fnmr": {"type": "number", "minimum": 0, "maximum": 1},
                            },
                            "additionalProperties": False,
                        },
                    },
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

BENCH_REPORT = {
    "type": "object",
    "required": ["stages", "total_ms", "repetitions", "warmup", "affinity", "track"],
    "properties": {
        "stages": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["median_ms", "runs_ms"],
                "properties": {
                    "median_ms": {"type": "number", "minimum": 0},
                    "runs_ms": {"type": "array", "items": {"type": "number"}},
                },
                "additionalProperties": False,
            },
        },
        "total_ms": {"type": "number", "minimum": 0},
        "repetitions": {"type": "integer", "minimum": 1},
        "warmup": {"type": "integer", "minimum": 0},
        "affinity": {"type": "string"},
        "track": {"type": "string"},
        "track_limit_ms": {"type": ["integer", "null"]},
    },
    "additionalProperties": False,
}

_BY_NAME = {
    "stage_stats": STAGE_STATS,
    "histograms": HISTOGRAMS,
    "clean_summary": CLEAN_SUMMARY,
    "verify_report": VERIFY_REPORT,
    "bench_report": BENCH_REPORT,
}


def validate_report(kind: str, obj: dict) -> None:
    jsonschema.validate(obj, _BY_NAME[kind])
