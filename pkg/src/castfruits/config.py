"""Flat key-value config files.

A config file is a single JSON object of dotted keys, e.g.
``{"intra.eps": 0.3, "cast.iterations": 3}``. CLI flags override file
values. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json

from .cast import CastConfig
from .inter import InterCleanConfig
from .intra import IntraCleanConfig
from .postclean import PostCleanConfig
from .synth import SynthConfig

KNOWN_KEYS = {
    "intra.eps": float,
    "intra.min_pts": int,
    "intra.min_dominant_size": int,
    "inter.merge_threshold": float,
    "inter.delete_low": float,
    "inter.max_passes": int,
    "post.duplicate_threshold": float,
    "post.overlap_threshold": float,
    "post.min_faces_per_identity": int,
    "cast.iterations": int,
    "cast.histogram_sample": int,
    "cast.seed": int,
    "synth.identity_count": int,
    "synth.faces_lo": int,
    "synth.faces_hi": int,
    "synth.dimension": int,
    "synth.cluster_concentration": float,
    "synth.outlier_rate": float,
    "synth.overlap_rate": float,
    "synth.duplicate_rate": float,
    "synth.seed": int,
    "eval.fmr_targets": list,
    "eval.max_impostor_pairs": int,
    "eval.seed": int,
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a single JSON object")
    out = {}
    for key, value in obj.items():
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        want = KNOWN_KEYS[key]
        if want is float and isinstance(value, (int, float)):
            out[key] = float(value)
        elif want is int and isinstance(value, int) and not isinstance(value, bool):
            out[key] = value
        elif want is list and isinstance(value, list):
            out[key] = value
        else:
            raise ConfigError(f"config key {key!r} expects {want.__name__}")
    return out


def merge(file_values: dict, overrides: dict) -> dict:
    """Overrides (CLI flags) win; None overrides are ignored."""
    merged = dict(file_values)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return merged


def _pick(values: dict, prefix: str, cls, fields: dict):
    kwargs = {}
    for name, key in fields.items():
        if f"{prefix}.{key}" in values:
            kwargs[name] = values[f"{prefix}.{key}"]
    return cls(**kwargs)


def intra_config(values: dict) -> IntraCleanConfig:
    return _pick(values, "intra", IntraCleanConfig,
                 {"eps": "eps", "min_pts": "min_pts", "min_dominant_size": "min_dominant_size"})


def inter_config(values: dict) -> InterCleanConfig:
    return _pick(values, "inter", InterCleanConfig,
                 {"merge_threshold": "merge_threshold", "delete_low": "delete_low",
                  "max_passes": "max_passes"})


def post_config(values: dict) -> PostCleanConfig:
    return _pick(values, "post", PostCleanConfig,
                 {"duplicate_threshold": "duplicate_threshold",
                  "overlap_threshold": "overlap_threshold",
                  "min_faces_per_identity": "min_faces_per_identity"})


def cast_config(values: dict) -> CastConfig:
    kwargs = {}
    if "cast.iterations" in values:
        kwargs["iterations"] = values["cast.iterations"]
    if "cast.histogram_sample" in values:
        kwargs["histogram_sample"] = values["cast.histogram_sample"]
    if "cast.seed" in values:
        kwargs["seed"] = values["cast.seed"]
    return CastConfig(
        intra=intra_config(values), inter=inter_config(values), post=post_config(values),
        **kwargs,
    )


def synth_config(values: dict) -> SynthConfig:
    kwargs = {}
    simple = {
        "identity_count": "synth.identity_count",
        "dimension": "synth.dimension",
        "cluster_concentration": "synth.cluster_concentration",
        "outlier_rate": "synth.outlier_rate",
        "overlap_rate": "synth.overlap_rate",
        "duplicate_rate": "synth.duplicate_rate",
        "seed": "synth.seed",
    }
    for name, key in simple.items():
        if key in values:
            kwargs[name] = values[key]
    if "synth.faces_lo" in values or "synth.faces_hi" in values:
        lo = values.get("synth.faces_lo", SynthConfig.faces_per_identity[0])
        hi = values.get("synth.faces_hi", SynthConfig.faces_per_identity[1])
        kwargs["faces_per_identity"] = (lo, hi)
    return SynthConfig(**kwargs)
