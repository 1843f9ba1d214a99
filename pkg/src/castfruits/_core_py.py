"""Pure-numpy similarity kernels.

Fallback backend used when the compiled extension is unavailable (or forced
via CAST_FRUITS_KERNELS=python). Semantics must match ``_core`` exactly:
float32 inputs, float64 accumulation, identical DBSCAN traversal order.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_BLOCK = 512


def cosine_gram(x: np.ndarray) -> np.ndarray:
    """Full (n, n) float64 dot-product matrix of unit rows."""
    xd = x.astype(np.float64, copy=False)
    return xd @ xd.T


def dbscan_labels(x: np.ndarray, eps: float, min_pts: int):
    """Classic DBSCAN over distance 1 - cosine.

    Neighborhoods are inclusive of the query point. Returns
    (labels int64 with -1 for noise, core uint8). Deterministic for a
    fixed row order: points are seeded in index order and clusters are
    grown breadth-first with neighbor lists in ascending index order.
    """
    n = x.shape[0]
    sim_thr = 1.0 - eps
    adj = cosine_gram(x) >= sim_thr
    neigh = [np.flatnonzero(adj[i]) for i in range(n)]

    labels = np.full(n, -2, dtype=np.int64)
    core = np.zeros(n, dtype=np.uint8)
    cid = 0
    for p in range(n):
        if labels[p] != -2:
            continue
        if neigh[p].size < min_pts:
            labels[p] = -1
            continue
        labels[p] = cid
        core[p] = 1
        queue = list(neigh[p])
        k = 0
        while k < len(queue):
            q = queue[k]
            k += 1
            if labels[q] == -1:
                labels[q] = cid
            if labels[q] != -2:
                continue
            labels[q] = cid
            if neigh[q].size >= min_pts:
                core[q] = 1
                queue.extend(neigh[q])
        cid += 1
    return labels, core


def pairs_above(x: np.ndarray, threshold: float, strict: bool):
    """All unordered row pairs (i < j) with similarity above ``threshold``.

    ``strict`` selects > versus >=. Returned in row-major (i, then j) order
    as (ii int64, jj int64, sims float64).
    """
    n = x.shape[0]
    xd = x.astype(np.float64, copy=False)
    out_i, out_j, out_s = [], [], []
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        sims = xd[start:stop] @ xd.T
        mask = (sims > threshold) if strict else (sims >= threshold)
        rows, cols = np.nonzero(mask)
        keep = cols > (rows + start)
        out_i.append(rows[keep] + start)
        out_j.append(cols[keep])
        out_s.append(sims[rows[keep], cols[keep]])
    if not out_i:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), np.empty(0, dtype=np.float64)
    return (
        np.concatenate(out_i).astype(np.int64),
        np.concatenate(out_j).astype(np.int64),
        np.concatenate(out_s),
    )


def max_cross_sim(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per row of ``a``, the maximum similarity against any row of ``b``."""
    ad = a.astype(np.float64, copy=False)
    bd = b.astype(np.float64, copy=False)
    out = np.empty(a.shape[0], dtype=np.float64)
    for start in range(0, a.shape[0], _BLOCK):
        stop = min(start + _BLOCK, a.shape[0])
        out[start:stop] = (ad[start:stop] @ bd.T).max(axis=1)
    return out
