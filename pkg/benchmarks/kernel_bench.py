#!/usr/bin/env python3
"""Compare the compiled kernel backend against the numpy fallback.

Times the four similarity kernels on synthetic unit vectors and prints one
row per (kernel, size) with both backends and the speedup.

    python benchmarks/kernel_bench.py --sizes 200 500 1000 --dim 512
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from castfruits import _core_py

try:
    from castfruits import _core
except ImportError:
    _core = None


def points(rng, n, dim):
    caps = max(2, n // 60)
    centers = rng.standard_normal((caps, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    out = np.empty((n, dim))
    for i in range(n):
        c = centers[i % caps]
        v = c + 0.35 / np.sqrt(dim) * rng.standard_normal(dim)
        out[i] = v / np.linalg.norm(v)
    return out.astype(np.float32)


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best * 1000.0


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 500, 1000])
    ap.add_argument("--dim", type=int, default=512)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _core is None:
        print("compiled backend not built; run pip install -e . first")
        return 1

    rng = np.random.default_rng(args.seed)
    kernels = {
        "cosine_gram": lambda mod, x: mod.cosine_gram(x),
        "dbscan_labels": lambda mod, x: mod.dbscan_labels(x, 0.3, 2),
        "pairs_above": lambda mod, x: mod.pairs_above(x, 0.5, False),
        "max_cross_sim": lambda mod, x: mod.max_cross_sim(x[: len(x) // 2], x[len(x) // 2 :]),
    }
    header = f"{'kernel':<14} {'n':>6} {'compiled ms':>12} {'numpy ms':>10} {'speedup':>8}"
    print("single dense block (favors BLAS as n grows)")
    print(header)
    print("-" * len(header))
    for n in args.sizes:
        x = points(rng, n, args.dim)
        for name, call in kernels.items():
            compiled = best_of(lambda: call(_core, x), args.repeats)
            fallback = best_of(lambda: call(_core_py, x), args.repeats)
            print(f"{name:<14} {n:>6} {compiled:>12.2f} {fallback:>10.2f} {fallback / compiled:>7.2f}x")

    # the cleaning pipeline's actual shape: thousands of small folders,
    # where per-call overhead dominates
    folders = [points(rng, 20, args.dim) for _ in range(1000)]
    print("\nfolder workload: 1000 folders x 20 faces")
    print(f"{'kernel':<14} {'compiled ms':>12} {'numpy ms':>10} {'speedup':>8}")
    print("-" * 48)
    for name, call in (
        ("dbscan_labels", lambda mod: [mod.dbscan_labels(f, 0.3, 2) for f in folders]),
        ("pairs_above", lambda mod: [mod.pairs_above(f, 0.95, True) for f in folders]),
    ):
        compiled = best_of(lambda: call(_core), args.repeats)
        fallback = best_of(lambda: call(_core_py), args.repeats)
        print(f"{name:<14} {compiled:>12.2f} {fallback:>10.2f} {fallback / compiled:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
