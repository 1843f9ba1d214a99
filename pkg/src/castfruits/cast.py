"""The iterative self-training cleanup loop.

Each iteration re-embeds the ORIGINAL raw dataset with the current teacher,
runs per-folder cleaning then cross-folder resolution, fits the next
student on the cleaned output, and promotes it to teacher. After the final
iteration the duplicate/overlap/min-faces purification runs. Re-cleaning
always starts from the raw manifest, never from the previous iteration's
output, so later (better) teachers can recover faces an earlier teacher
dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .dataset import Dataset, FaceRecord
from .inter import InterAction, InterCleanConfig, resolve_folders
from .intra import IntraCleanConfig, clean_dataset
from .postclean import PostCleanConfig, post_clean
from .synth import MIN_FIT_SUBJECTS

HISTOGRAM_BINS = 200


class Embedder(Protocol):
    dimension: int

    def embed(self, face_ids: Sequence[str]) -> np.ndarray: ...

    def fit(self, cleaned: Dataset) -> "Embedder": ...


class StaticEmbedder:
    """Embedder backed by precomputed matrices (one per generation).

    Real-model workflows supply per-iteration embedding files; with a single
    matrix every generation reuses it.
    """

    def __init__(self, face_ids: Sequence[str], matrices: Sequence[np.ndarray], generation: int = 0):
        if not matrices:
            raise ValueError("StaticEmbedder needs at least one matrix")
        dims = {m.shape[1] for m in matrices}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dimensions {sorted(dims)}")
        counts = {m.shape[0] for m in matrices}
        if counts != {len(face_ids)}:
            raise ValueError("matrix row count does not match face id list")
        self._row = {fid: i for i, fid in enumerate(face_ids)}
        if len(self._row) != len(face_ids):
            raise ValueError("duplicate face ids")
        self._matrices = [np.asarray(m, dtype=np.float32) for m in matrices]
        self.generation = generation
        self.dimension = self._matrices[0].shape[1]

    @property
    def _matrix(self) -> np.ndarray:
        return self._matrices[min(self.generation, len(self._matrices) - 1)]

    def embed(self, face_ids: Sequence[str]) -> np.ndarray:
        try:
            rows = [self._row[f] for f in face_ids]
        except KeyError as exc:
            raise KeyError(f"face {exc.args[0]!r} has no embedding") from None
        return self._matrix[rows]

    def fit(self, cleaned: Dataset) -> "StaticEmbedder":
        if cleaned.subject_count < MIN_FIT_SUBJECTS:
            raise ValueError(
                f"fit: cleaned set has {cleaned.subject_count} subjects, "
                f"need >= {MIN_FIT_SUBJECTS}"
            )
        nxt = StaticEmbedder.__new__(StaticEmbedder)
        nxt._row = self._row
        nxt._matrices = self._matrices
        nxt.generation = self.generation + 1
        nxt.dimension = self.dimension
        return nxt


@dataclass(frozen=True)
class CastConfig:
    iterations: int = 3
    intra: IntraCleanConfig = field(default_factory=IntraCleanConfig)
    inter: InterCleanConfig = field(default_factory=InterCleanConfig)
    post: PostCleanConfig = field(default_factory=PostCleanConfig)
    histogram_sample: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.histogram_sample < 1:
            raise ValueError("histogram_sample must be >= 1")


@dataclass(frozen=True)
class StageStats:
    stage: str
    iteration: int
    identity_count: int
    face_count: int

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "iteration": self.iteration,
            "identities": self.identity_count,
            "faces": self.face_count,
        }


@dataclass
class SimilarityHistograms:
    intra_counts: np.ndarray
    inter_counts: np.ndarray
    bin_count: int = HISTOGRAM_BINS

    def bin_edges(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.bin_count + 1)

    def to_dict(self) -> dict:
        return {
            "bin_edges": [float(e) for e in self.bin_edges()],
            "intra_counts": [int(c) for c in self.intra_counts],
            "inter_counts": [int(c) for c in self.inter_counts],
        }


class PipelineCollapse(RuntimeError):
    pass


def canonical_rows(dataset: Dataset):
    """Re-index records so embedding_row is the position in canonical
    (subject_id, face_id) order; returns (dataset', face id list)."""
    ordered = sorted(dataset.records, key=lambda r: (r.subject_id, r.face_id))
    recs = [
        FaceRecord(r.face_id, r.subject_id, i, r.attributes)
        for i, r in enumerate(ordered)
    ]
    return Dataset(recs), [r.face_id for r in recs]


def _histograms_from_matrix(
    dataset: Dataset, embeddings: np.ndarray, sample: int, seed: int
) -> SimilarityHistograms:
    folders = dataset.by_subject
    sids = sorted(folders)
    if sample < 1:
        raise ValueError("sample must be >= 1")
    if sample > len(sids):
        raise ValueError(f"sample {sample} exceeds folder count {len(sids)}")
    rng = np.random.default_rng(np.random.SeedSequence([abs(seed), 0x48495354]))
    chosen = sorted(rng.choice(len(sids), size=sample, replace=False))
    row_of = dataset.row_of()

    intra = np.zeros(HISTOGRAM_BINS, dtype=np.int64)
    inter = np.zeros(HISTOGRAM_BINS, dtype=np.int64)
    centroids = np.empty((sample, embeddings.shape[1]), dtype=np.float64)
    for k, idx in enumerate(chosen):
        recs = folders[sids[idx]]
        mat = embeddings[[row_of[r.face_id] for r in recs]].astype(np.float64)
        mean = mat.mean(axis=0)
        norm = np.linalg.norm(mean)
        centroids[k] = mean / norm if norm > 1e-12 else 0.0
        if mat.shape[0] > 1:
            gram = mat @ mat.T
            sims = gram[np.triu_indices(mat.shape[0], k=1)]
            counts, _ = np.histogram(np.clip(sims, -1.0, 1.0), bins=HISTOGRAM_BINS, range=(-1.0, 1.0))
            intra += counts
    if sample > 1:
        gram = centroids @ centroids.T
        sims = gram[np.triu_indices(sample, k=1)]
        counts, _ = np.histogram(np.clip(sims, -1.0, 1.0), bins=HISTOGRAM_BINS, range=(-1.0, 1.0))
        inter += counts
    return SimilarityHistograms(intra_counts=intra, inter_counts=inter)


def similarity_histograms(
    dataset: Dataset, embedder: Embedder, sample: int, seed: int
) -> SimilarityHistograms:
    """Within-folder pair similarities (intra) and folder-centroid pair
    similarities (inter) over a seeded folder sample, as 200 fixed bins
    covering [-1, 1]."""
    working, face_ids = canonical_rows(dataset)
    emb = embedder.embed(face_ids)
    return _histograms_from_matrix(working, emb, sample, seed)


def histogram_overlap(hist: SimilarityHistograms) -> float:
    """Bin-wise min of the two normalized histograms; 0 disjoint, 1 identical."""
    ti = hist.intra_counts.sum()
    te = hist.inter_counts.sum()
    if ti == 0 or te == 0:
        raise ValueError("empty histogram")
    return float(
        np.minimum(hist.intra_counts / ti, hist.inter_counts / te).sum()
    )


@dataclass
class CastResult:
    cleaned: Dataset
    embeddings: np.ndarray  # rows aligned with cleaned.embedding_row
    stats: list[StageStats]
    histograms: list[SimilarityHistograms]
    overlaps: list[float]
    actions: list[list[InterAction]]
    iteration_outputs: list[Dataset]  # cleaned dataset after each iteration
    final_embedder: Embedder


def validate_stage_stats(stats: list[StageStats]) -> None:
    """Within each iteration faces/identities must satisfy
    inter <= intra <= raw, and post-clean rows must keep shrinking."""
    raw = next(s for s in stats if s.stage == "raw")
    by_iter: dict[int, dict[str, StageStats]] = {}
    for s in stats:
        if s.stage in ("intra", "inter"):
            by_iter.setdefault(s.iteration, {})[s.stage] = s
    last_inter = None
    for it in sorted(by_iter):
        intra_s, inter_s = by_iter[it].get("intra"), by_iter[it].get("inter")
        if intra_s is None or inter_s is None:
            raise ValueError(f"iteration {it}: missing intra/inter rows")
        for attr in ("face_count", "identity_count"):
            r, a, e = getattr(raw, attr), getattr(intra_s, attr), getattr(inter_s, attr)
            if not e <= a <= r:
                raise ValueError(
                    f"iteration {it}: {attr} must satisfy inter <= intra <= raw, "
                    f"got {e}, {a}, {r}"
                )
        last_inter = inter_s
    prev = last_inter
    for s in stats:
        if s.stage in ("remove_duplicates", "remove_test_overlaps", "enforce_min_faces"):
            if prev is not None and (
                s.face_count > prev.face_count or s.identity_count > prev.identity_count
            ):
                raise ValueError(f"post-clean stage {s.stage} increased counts")
            prev = s


def run_cast(
    raw: Dataset,
    embedder0: Embedder,
    config: CastConfig,
    test_centroids: np.ndarray | None = None,
) -> CastResult:
    """Run the full teacher/student loop and final purification.

    Emits per-stage counts, one similarity histogram per iteration (raw
    dataset under that iteration's teacher), and the cross-folder action
    logs. Raises PipelineCollapse if any iteration cleans away everything.
    """
    if len(raw) == 0:
        raise ValueError("raw dataset is empty")
    working, face_ids = canonical_rows(raw)
    stats = [StageStats("raw", 0, working.subject_count, working.face_count)]
    histograms: list[SimilarityHistograms] = []
    overlaps: list[float] = []
    all_actions: list[list[InterAction]] = []

    teacher = embedder0
    emb = None
    cleaned = working
    iteration_outputs: list[Dataset] = []
    for it in range(1, config.iterations + 1):
        try:
            emb = teacher.embed(face_ids)
        except Exception as exc:
            raise RuntimeError(f"iteration {it}: embedder failed: {exc}") from exc
        if emb.shape != (len(face_ids), teacher.dimension):
            raise ValueError(f"iteration {it}: embedder returned a misshapen matrix")

        hist = _histograms_from_matrix(
            working, emb, min(config.histogram_sample, working.subject_count), config.seed
        )
        histograms.append(hist)
        overlaps.append(histogram_overlap(hist))

        try:
            intra_ds = clean_dataset(working, emb, config.intra)
        except Exception as exc:
            raise RuntimeError(f"iteration {it}: intra-clean failed: {exc}") from exc
        stats.append(StageStats("intra", it, intra_ds.subject_count, intra_ds.face_count))
        if intra_ds.face_count == 0:
            raise PipelineCollapse(f"pipeline collapsed at iteration {it} (intra)")

        inter_ds, actions = resolve_folders(intra_ds, emb, config.inter)
        stats.append(StageStats("inter", it, inter_ds.subject_count, inter_ds.face_count))
        all_actions.append(actions)
        if inter_ds.face_count == 0:
            raise PipelineCollapse(f"pipeline collapsed at iteration {it} (inter)")

        cleaned = inter_ds
        iteration_outputs.append(cleaned)
        try:
            teacher = teacher.fit(cleaned)
        except Exception as exc:
            raise RuntimeError(f"iteration {it}: student fit failed: {exc}") from exc

    final_ds, post_stages = post_clean(cleaned, emb, config.post, test_centroids)
    for name, ids, faces in post_stages:
        stats.append(StageStats(name, config.iterations, ids, faces))
    if final_ds.face_count == 0:
        raise PipelineCollapse("pipeline collapsed during post-clean")
    validate_stage_stats(stats)

    row_of = {fid: i for i, fid in enumerate(face_ids)}
    ordered = sorted(final_ds.records, key=lambda r: (r.subject_id, r.face_id))
    out_rows = np.array([row_of[r.face_id] for r in ordered], dtype=np.int64)
    out_records = [
        FaceRecord(r.face_id, r.subject_id, i, r.attributes) for i, r in enumerate(ordered)
    ]
    return CastResult(
        cleaned=Dataset(out_records),
        embeddings=emb[out_rows],
        stats=stats,
        histograms=histograms,
        overlaps=overlaps,
        actions=all_actions,
        iteration_outputs=iteration_outputs,
        final_embedder=teacher,
    )
