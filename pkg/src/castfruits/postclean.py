"""Final purification: per-subject duplicate removal, test-set overlap
removal, and the minimum-faces floor.

Duplicates form a graph (edges where similarity exceeds the duplicate
threshold); one representative per connected component survives, chosen as
the face closest to the subject centroid. Test-set overlap removal drops a
whole subject when its centroid scores above the overlap threshold against
any test centroid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Dataset
from .inter import folder_centroids

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PostCleanConfig:
    duplicate_threshold: float = 0.95
    overlap_threshold: float = 0.7
    min_faces_per_identity: int = 3

    def __post_init__(self):
        if not 0.0 < self.duplicate_threshold < 1.0:
            raise ValueError("duplicate_threshold must be in (0, 1)")
        if not 0.0 < self.overlap_threshold < 1.0:
            raise ValueError("overlap_threshold must be in (0, 1)")
        if self.min_faces_per_identity < 1:
            raise ValueError("min_faces_per_identity must be >= 1")


class _UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, u: int) -> int:
        while self.parent[u] != u:
            self.parent[u] = self.parent[self.parent[u]]
            u = self.parent[u]
        return u

    def union(self, u: int, v: int) -> None:
        ru, rv = self.find(u), self.find(v)
        if ru != rv:
            self.parent[rv] = ru


def dedup_subject(
    face_ids: list[str], embeddings, config: PostCleanConfig
) -> list[str]:
    """Retain one face per duplicate component; everything else unchanged.

    The kept face is the one most similar to the subject centroid (computed
    over all faces, duplicates included); ties go to the smallest face_id.
    Idempotent, and never empties a non-empty subject.
    """
    n = len(face_ids)
    if n <= 1:
        return list(face_ids)
    mat = np.ascontiguousarray(np.asarray(embeddings, dtype=np.float32))
    ii, jj, _ = kernels.pairs_above(mat, config.duplicate_threshold, strict=True)
    if ii.size == 0:
        return list(face_ids)

    uf = _UnionFind(n)
    for i, j in zip(ii, jj):
        uf.union(int(i), int(j))

    mean = mat.astype(np.float64).mean(axis=0)
    norm = np.linalg.norm(mean)
    to_center = mat.astype(np.float64) @ (mean / norm) if norm > 1e-12 else np.zeros(n)

    components: dict[int, list[int]] = {}
    for i in range(n):
        components.setdefault(uf.find(i), []).append(i)

    keep = []
    for comp in components.values():
        best = min(comp, key=lambda i: (-to_center[i], face_ids[i]))
        keep.append(best)
    kept_ids = {face_ids[i] for i in keep}
    return [f for f in face_ids if f in kept_ids]


def dedup_dataset(dataset: Dataset, embeddings: np.ndarray, config: PostCleanConfig) -> Dataset:
    row_of = dataset.row_of()
    keep: set[str] = set()
    for sid, recs in dataset.by_subject.items():
        ids = [r.face_id for r in recs]
        mat = embeddings[[row_of[f] for f in ids]]
        keep.update(dedup_subject(ids, mat, config))
    return dataset.restrict(keep)


def remove_test_overlap(
    subject_ids: list[str],
    subject_centroids: np.ndarray,
    test_centroids: np.ndarray | None,
    config: PostCleanConfig,
) -> list[str]:
    """Subjects whose max similarity to any test centroid stays at or below
    the overlap threshold. An empty test set retains everything (warned)."""
    if test_centroids is None or len(test_centroids) == 0:
        log.warning("remove_test_overlap: empty test set, nothing removed")
        return list(subject_ids)
    best = kernels.max_cross_sim(subject_centroids, test_centroids)
    return [sid for sid, s in zip(subject_ids, best) if s <= config.overlap_threshold]


def enforce_min_faces(dataset: Dataset, config: PostCleanConfig) -> Dataset:
    keep = {
        f.face_id
        for sid, recs in dataset.by_subject.items()
        if len(recs) >= config.min_faces_per_identity
        for f in recs
    }
    return dataset.restrict(keep)


def post_clean(
    dataset: Dataset,
    embeddings: np.ndarray,
    config: PostCleanConfig,
    test_centroids: np.ndarray | None = None,
):
    """Dedup, then overlap removal, then the minimum-faces floor.

    Returns (dataset', per-stage (name, identities, faces) counts)."""
    stages = []
    ds = dedup_dataset(dataset, embeddings, config)
    stages.append(("remove_duplicates", ds.subject_count, ds.face_count))

    sids, cents = folder_centroids(ds, embeddings) if len(ds) else ([], np.empty((0, 1)))
    kept = set(remove_test_overlap(sids, cents, test_centroids, config))
    ds = ds.restrict({r.face_id for r in ds.records if r.subject_id in kept})
    stages.append(("remove_test_overlaps", ds.subject_count, ds.face_count))

    ds = enforce_min_faces(ds, config)
    stages.append(("enforce_min_faces", ds.subject_count, ds.face_count))
    return ds, stages
