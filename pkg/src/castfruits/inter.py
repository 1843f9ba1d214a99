"""Cross-folder identity resolution via centroid similarity.

Two folders whose centroids score above the merge threshold are the same
person split in two: their face sets are unioned under the survivor. Pairs
scoring between the delete floor and the merge threshold are too entangled
to trust, so the smaller folder is dropped. Pairs are processed highest
similarity first, recomputing the survivor's centroid after each merge and
iterating to a fixpoint (capped by ``max_passes``), which makes the outcome
independent of input folder order.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Dataset
from .vectors import clamp_similarity

MERGE = "MERGE"
DELETE = "DELETE"


@dataclass(frozen=True)
class InterCleanConfig:
    merge_threshold: float = 0.7
    delete_low: float = 0.5
    max_passes: int = 10

    def __post_init__(self):
        if not 0.0 < self.delete_low < self.merge_threshold < 1.0:
            raise ValueError(
                f"need 0 < delete_low < merge_threshold < 1, got "
                f"{self.delete_low}, {self.merge_threshold}"
            )
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")


@dataclass(frozen=True)
class InterAction:
    kind: str  # MERGE or DELETE
    survivor: str
    victim: str
    similarity: float

    def __post_init__(self):
        if self.kind not in (MERGE, DELETE):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.survivor == self.victim:
            raise ValueError("survivor and victim must differ")


def folder_centroids(dataset: Dataset, embeddings: np.ndarray):
    """(sorted subject ids, unit centroid matrix) for every folder."""
    sids = sorted(dataset.by_subject)
    row_of = dataset.row_of()
    cents = np.empty((len(sids), embeddings.shape[1]), dtype=np.float32)
    for i, sid in enumerate(sids):
        rows = [row_of[r.face_id] for r in dataset.by_subject[sid]]
        cents[i] = _centroid_of_rows(embeddings, rows)
    return sids, cents


def _centroid_of_rows(embeddings: np.ndarray, rows: list[int]) -> np.ndarray:
    mean = embeddings[rows].astype(np.float64).mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-6:
        raise ValueError("degenerate centroid")
    return (mean / norm).astype(np.float32)


def pairwise_centroid_scan(sids: list[str], centroids: np.ndarray, delete_low: float):
    """Exact brute-force list of (sid_a, sid_b, sim) with sim >= delete_low,
    sorted by similarity descending, ties by (smaller sid, larger sid)."""
    ii, jj, sims = kernels.pairs_above(centroids, delete_low, strict=False)
    out = []
    for i, j, s in zip(ii, jj, sims):
        a, b = sids[i], sids[j]
        if b < a:
            a, b = b, a
        out.append((a, b, clamp_similarity(float(s))))
    out.sort(key=lambda t: (-t[2], t[0], t[1]))
    return out


def resolve_folders(dataset: Dataset, embeddings: np.ndarray, config: InterCleanConfig):
    """Apply the merge/delete rules until no folder pair scores >= delete_low
    (or the pass budget runs out). Returns (dataset', ordered action log).

    MERGE survivor is the larger folder (ties: lexicographically smaller
    subject id); DELETE victim is the smaller folder (ties: the
    lexicographically larger subject id is deleted).
    """
    row_of = dataset.row_of()
    members: dict[str, list[str]] = {
        sid: [r.face_id for r in recs] for sid, recs in dataset.by_subject.items()
    }
    cents: dict[str, np.ndarray] = {
        sid: _centroid_of_rows(embeddings, [row_of[f] for f in faces])
        for sid, faces in members.items()
    }
    version = {sid: 0 for sid in members}
    actions: list[InterAction] = []

    def live_pairs_heap():
        sids = sorted(members)
        if len(sids) < 2:
            return []
        mat = np.stack([cents[s] for s in sids])
        heap = []
        for a, b, s in pairwise_centroid_scan(sids, mat, config.delete_low):
            heap.append((-s, a, b, version[a], version[b]))
        heapq.heapify(heap)
        return heap

    def fresh_pairs_for(sid: str):
        others = sorted(s for s in members if s != sid)
        if not others:
            return
        mat = np.stack([cents[s] for s in others]).astype(np.float64)
        vals = mat @ cents[sid].astype(np.float64)
        for other, val in zip(others, vals):
            s = clamp_similarity(float(val))
            if s >= config.delete_low:
                a, b = (sid, other) if sid < other else (other, sid)
                heapq.heappush(heap, (-s, a, b, version[a], version[b]))

    for _ in range(config.max_passes):
        heap = live_pairs_heap()
        if not heap:
            break
        acted = False
        while heap:
            negs, a, b, va, vb = heapq.heappop(heap)
            if a not in members or b not in members:
                continue
            if version[a] != va or version[b] != vb:
                continue
            sim = -negs
            if sim > config.merge_threshold:
                if len(members[a]) > len(members[b]):
                    survivor, victim = a, b
                elif len(members[b]) > len(members[a]):
                    survivor, victim = b, a
                else:
                    survivor, victim = (a, b) if a < b else (b, a)
                members[survivor] = sorted(members[survivor] + members[victim])
                del members[victim]
                del cents[victim]
                version.pop(victim)
                cents[survivor] = _centroid_of_rows(
                    embeddings, [row_of[f] for f in members[survivor]]
                )
                version[survivor] += 1
                actions.append(InterAction(MERGE, survivor, victim, sim))
                fresh_pairs_for(survivor)
            else:
                if len(members[a]) < len(members[b]):
                    survivor, victim = b, a
                elif len(members[b]) < len(members[a]):
                    survivor, victim = a, b
                else:
                    survivor, victim = (a, b) if b > a else (b, a)
                del members[victim]
                del cents[victim]
                version.pop(victim)
                actions.append(InterAction(DELETE, survivor, victim, sim))
            acted = True
        if not acted:
            break

    remap: dict[str, str | None] = {}
    live_faces = {f for faces in members.values() for f in faces}
    for sid, faces in members.items():
        for f in faces:
            remap[f] = sid
    for rec in dataset.records:
        if rec.face_id not in live_faces:
            remap[rec.face_id] = None
    return dataset.reassign_subjects(remap), actions


def apply_actions(dataset: Dataset, actions: list[InterAction]) -> Dataset:
    """Replay an action log against the input dataset."""
    members: dict[str, list[str]] = {
        sid: [r.face_id for r in recs] for sid, recs in dataset.by_subject.items()
    }
    for act in actions:
        if act.victim not in members or act.survivor not in members:
            raise ValueError(f"replay references unknown folder in {act}")
        if act.kind == MERGE:
            members[act.survivor] = sorted(members[act.survivor] + members[act.victim])
        del members[act.victim]
    remap: dict[str, str | None] = {}
    live = {f for faces in members.values() for f in faces}
    for sid, faces in members.items():
        for f in faces:
            remap[f] = sid
    for rec in dataset.records:
        if rec.face_id not in live:
            remap[rec.face_id] = None
    return dataset.reassign_subjects(remap)


def write_actions(actions: list[InterAction], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for act in actions:
            fh.write(
                json.dumps(
                    {
                        "kind": act.kind,
                        "survivor": act.survivor,
                        "victim": act.victim,
                        "similarity": act.similarity,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


def read_actions(path) -> list[InterAction]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                InterAction(obj["kind"], obj["survivor"], obj["victim"], obj["similarity"])
            )
    return out
