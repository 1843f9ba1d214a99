"""Kernel backend selection.

Prefers the compiled extension and falls back to the numpy implementation
when it is missing. Set CAST_FRUITS_KERNELS=python (or =compiled) to force
a backend; forcing the compiled backend raises if it was never built.
"""

from __future__ import annotations

import os

import numpy as np

from . import _core_py

_forced = os.environ.get("CAST_FRUITS_KERNELS", "").strip().lower()
if _forced in {"python", "numpy"}:
    _impl = _core_py
elif _forced == "compiled":
    from . import _core as _impl
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _core_py

BACKEND: str = _impl.BACKEND


def _mat(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float32))


def cosine_gram(x) -> np.ndarray:
    return _impl.cosine_gram(_mat(x))


def dbscan_labels(x, eps: float, min_pts: int):
    return _impl.dbscan_labels(_mat(x), float(eps), int(min_pts))


def pairs_above(x, threshold: float, strict: bool):
    return _impl.pairs_above(_mat(x), float(threshold), bool(strict))


def max_cross_sim(a, b) -> np.ndarray:
    return _impl.max_cross_sim(_mat(a), _mat(b))
