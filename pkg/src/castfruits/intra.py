"""Per-folder cleaning: density clustering and dominant-cluster selection.

Each putative-subject folder is clustered with DBSCAN over the metric
d(a, b) = 1 - cosine(a, b); only the largest cluster survives, and only if
it has at least ``min_dominant_size`` members. Folders are independent, so
cleaning parallelizes across them with bit-identical results.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Dataset
from .vectors import as_matrix

NOISE = -1


@dataclass(frozen=True)
class IntraCleanConfig:
    eps: float = 0.3  # cosine distance; 0.3 corresponds to similarity 0.7
    min_pts: int = 2  # neighborhood count, inclusive of the point itself
    min_dominant_size: int = 3

    def __post_init__(self):
        if not 0.0 < self.eps < 2.0:
            raise ValueError(f"eps must be in (0, 2), got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")
        if self.min_dominant_size < 3:
            raise ValueError(
                f"min_dominant_size must be >= 3, got {self.min_dominant_size}"
            )


@dataclass
class ClusterLabeling:
    labels: np.ndarray  # int64, cluster id per face or NOISE
    core_flags: np.ndarray  # uint8

    def cluster_sizes(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels[self.labels != NOISE], return_counts=True)
        return {int(c): int(n) for c, n in zip(ids, counts)}


def dbscan(embeddings, config: IntraCleanConfig) -> ClusterLabeling:
    """Cluster unit vectors; deterministic for a fixed input order."""
    mat = as_matrix(embeddings)
    if mat.shape[0] == 0:
        raise ValueError("dbscan: empty input")
    labels, core = kernels.dbscan_labels(mat, config.eps, config.min_pts)
    return ClusterLabeling(labels=labels, core_flags=core)


def select_dominant(
    labeling: ClusterLabeling,
    config: IntraCleanConfig,
    embeddings=None,
    face_ids: list[str] | None = None,
) -> np.ndarray:
    """Indices of the largest cluster, or empty if it is below the size floor.

    Size ties are broken by the higher mean member-to-cluster-centroid
    similarity; residual ties by the lexicographically smallest member
    face_id (falling back to the smallest member index when ids are not
    supplied). Content-based, so the retained set is stable under input
    permutation.
    """
    sizes = labeling.cluster_sizes()
    if not sizes:
        return np.empty(0, dtype=np.int64)
    best_size = max(sizes.values())
    if best_size < config.min_dominant_size:
        return np.empty(0, dtype=np.int64)
    candidates = sorted(c for c, n in sizes.items() if n == best_size)
    if len(candidates) == 1:
        winner = candidates[0]
    else:
        if embeddings is None:
            raise ValueError("tie-break requires embeddings")
        mat = as_matrix(embeddings).astype(np.float64)
        scored = []
        for cid in candidates:
            idx = np.flatnonzero(labeling.labels == cid)
            members = mat[idx]
            center = members.mean(axis=0)
            norm = np.linalg.norm(center)
            cohesion = float((members @ (center / norm)).mean()) if norm > 0 else -2.0
            if face_ids is not None:
                smallest = min(face_ids[i] for i in idx)
            else:
                smallest = int(idx.min())
            scored.append((-cohesion, smallest, cid))
        scored.sort()
        winner = scored[0][2]
    return np.flatnonzero(labeling.labels == winner)


def clean_folder(
    face_ids: list[str], embeddings, config: IntraCleanConfig, clusterer=dbscan
) -> list[str]:
    """cluster + select_dominant; returns the retained face ids (subset).

    ``clusterer`` is any callable (embeddings, config) -> ClusterLabeling,
    so alternative per-folder clusterers can slot in.
    """
    if len(face_ids) == 0:
        raise ValueError("clean_folder: empty folder")
    labeling = clusterer(embeddings, config)
    keep = select_dominant(labeling, config, embeddings=embeddings, face_ids=face_ids)
    return [face_ids[i] for i in keep]


def worker_count() -> int:
    raw = os.environ.get("CAST_FRUITS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def clean_dataset(
    dataset: Dataset,
    embeddings: np.ndarray,
    config: IntraCleanConfig,
    workers: int | None = None,
    clusterer=dbscan,
) -> Dataset:
    """Apply clean_folder to every folder; folders whose dominant cluster is
    too small drop out entirely."""
    if workers is None:
        workers = worker_count()
    folders = dataset.by_subject
    row_of = dataset.row_of()

    def one(sid: str) -> tuple[str, list[str]]:
        recs = folders[sid]
        ids = [r.face_id for r in recs]
        mat = embeddings[[row_of[f] for f in ids]]
        return sid, clean_folder(ids, mat, config, clusterer=clusterer)

    subject_ids = sorted(folders)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(one, subject_ids))
    else:
        results = dict(one(sid) for sid in subject_ids)

    keep: set[str] = set()
    for sid in subject_ids:
        keep.update(results[sid])
    return dataset.restrict(keep)
