"""Seeded synthetic face-embedding datasets with ground truth.

The generator plants the three noise types the cleaning pipeline must
undo: outlier faces inside folders, identities split across two folders,
and near-duplicate faces. Everything derives deterministically from the
config seed; per-face latents are hash-seeded so the reference embedder
can regenerate them without storing vectors.

Geometry: identity directions share a weak common component (different
people are mildly correlated, never enough to trip the merge/delete
thresholds); per-face nuisance directions mix an isotropic part with a
shared low-rank subspace (correlated capture conditions), with a
log-normal per-face magnitude (heterogeneous face quality).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    VALID_GENDERS,
    VALID_RACES,
    VALID_SCENARIOS,
    Attributes,
    Dataset,
    FaceRecord,
)
from .vectors import normalize

# Latent-geometry constants (shared by the generator and the reference
# embedder; tuned so default cleaning thresholds behave sensibly).
IDENTITY_CORRELATION = 0.28
NOISE_RANK = 12
NOISE_RANK_WEIGHT = 1.2
# Per-face capture quality is bimodal: easy captures cluster under a weak
# first-generation embedder, hard captures only resolve once the embedder
# improves. Magnitudes are log-normal around the mode medians.
EASY_SHARE = 0.55
NOISE_SCALE_EASY = 0.60
NOISE_SCALE_HARD = 2.60
NOISE_SCALE_SIGMA = 0.20
DUP_JITTER = 0.08

JUNK_PREFIX = "junk::"


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    identity_count: int = 100
    faces_per_identity: tuple[int, int] = (15, 25)
    dimension: int = 512
    cluster_concentration: float = 0.35  # median member-to-center angle, radians
    outlier_rate: float = 0.0
    overlap_rate: float = 0.0
    duplicate_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.identity_count < 2:
            raise SynthError("identity_count must be >= 2")
        if self.dimension < 2:
            raise SynthError("dimension must be >= 2")
        lo, hi = self.faces_per_identity
        if lo < 1 or hi < lo:
            raise SynthError(f"bad faces_per_identity range {self.faces_per_identity}")
        for name in ("outlier_rate", "overlap_rate", "duplicate_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SynthError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 < self.cluster_concentration < 1.5:
            raise SynthError("cluster_concentration must be in (0, 1.5) radians")


@dataclass
class GroundTruth:
    seed: int
    dimension: int
    cluster_concentration: float
    true_identity: dict[str, str]
    origin_folder: dict[str, str]
    true_merges: list[tuple[str, str]]
    planted_duplicates: list[tuple[str, str]]
    dominant_faces: list[str] = field(default_factory=list)

    @property
    def raw_face_count(self) -> int:
        return len(self.true_identity)

    def dup_source(self) -> dict[str, str]:
        return {dup: src for src, dup in self.planted_duplicates}

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "dimension": self.dimension,
            "cluster_concentration": self.cluster_concentration,
            "true_identity": self.true_identity,
            "origin_folder": self.origin_folder,
            "true_merges": [list(p) for p in self.true_merges],
            "planted_duplicates": [list(p) for p in self.planted_duplicates],
            "dominant_faces": self.dominant_faces,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(
            seed=obj["seed"],
            dimension=obj["dimension"],
            cluster_concentration=obj["cluster_concentration"],
            true_identity=dict(obj["true_identity"]),
            origin_folder=dict(obj["origin_folder"]),
            true_merges=[tuple(p) for p in obj["true_merges"]],
            planted_duplicates=[tuple(p) for p in obj["planted_duplicates"]],
            dominant_faces=list(obj["dominant_faces"]),
        )


def save_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_json(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_truth(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        return GroundTruth.from_json(json.load(fh))


def _stream(*parts) -> np.random.Generator:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence(words))


class LatentWorld:
    """Deterministic latent state keyed by (seed, dimension, concentration)."""

    def __init__(self, seed: int, dimension: int, cluster_concentration: float):
        self.seed = seed
        self.dimension = dimension
        self.cap_sigma = float(np.tan(cluster_concentration)) / np.sqrt(dimension)
        rng = _stream(seed, "shared")
        self._common = normalize(rng.standard_normal(dimension))
        rank = min(NOISE_RANK, dimension)
        basis = rng.standard_normal((dimension, rank))
        self._basis, _ = np.linalg.qr(basis)
        self._rank = rank
        self._dir_cache: dict[str, np.ndarray] = {}
        self._signal_cache: dict[str, np.ndarray] = {}
        self._latent_cache: dict[str, tuple[float, np.ndarray]] = {}

    def identity_direction(self, identity_id: str) -> np.ndarray:
        cached = self._dir_cache.get(identity_id)
        if cached is not None:
            return cached
        rng = _stream(self.seed, "identity", identity_id)
        if identity_id.startswith(JUNK_PREFIX):
            vec = normalize(rng.standard_normal(self.dimension))
        else:
            rho = IDENTITY_CORRELATION
            m = np.sqrt(rho / (1.0 - rho))
            own = rng.standard_normal(self.dimension)
            own /= np.linalg.norm(own)
            vec = normalize(m * self._common.astype(np.float64) + own)
        self._dir_cache[identity_id] = vec
        return vec

    def signal_direction(self, face_id: str, identity_id: str) -> np.ndarray:
        """The face's true appearance: a cap sample around its identity
        direction (junk identities are their own uniform direction)."""
        cached = self._signal_cache.get(face_id)
        if cached is not None:
            return cached
        mu = self.identity_direction(identity_id)
        if identity_id.startswith(JUNK_PREFIX):
            vec = mu
        else:
            rng = _stream(self.seed, "cap", face_id)
            vec = normalize(
                mu.astype(np.float64) + self.cap_sigma * rng.standard_normal(self.dimension)
            )
        self._signal_cache[face_id] = vec
        return vec

    def face_noise(self, face_id: str) -> tuple[float, np.ndarray]:
        """Per-face nuisance: (magnitude, unit direction), fixed forever."""
        cached = self._latent_cache.get(face_id)
        if cached is not None:
            return cached
        rng = _stream(self.seed, "facenoise", face_id)
        iso = rng.standard_normal(self.dimension)
        iso /= np.linalg.norm(iso)
        low = self._basis @ rng.standard_normal(self._rank)
        low /= np.linalg.norm(low)
        direction = normalize(iso + NOISE_RANK_WEIGHT * low)
        median = NOISE_SCALE_EASY if rng.random() < EASY_SHARE else NOISE_SCALE_HARD
        scale = float(rng.lognormal(mean=np.log(median), sigma=NOISE_SCALE_SIGMA))
        latent = (scale, direction)
        self._latent_cache[face_id] = latent
        return latent

    def dup_jitter(self, face_id: str) -> np.ndarray:
        rng = _stream(self.seed, "dupjitter", face_id)
        vec = rng.standard_normal(self.dimension)
        return (vec / np.linalg.norm(vec)).astype(np.float32)


def generate(config: SynthConfig):
    """Build (dataset, embeddings, truth) for the configured noisy world.

    The emitted embedding matrix is the idealized capture: members inside a
    spherical cap around their identity direction, outliers swapped for
    other identities or uniform junk, duplicates jittered copies.
    """
    rng = _stream(config.seed, "structure")
    world = LatentWorld(config.seed, config.dimension, config.cluster_concentration)
    lo, hi = config.faces_per_identity
    identity_ids = [f"id{i:05d}" for i in range(config.identity_count)]

    split_count = int(round(config.overlap_rate * config.identity_count))
    if split_count > 0 and config.identity_count < 2:
        raise SynthError("overlap_rate infeasible with identity_count < 2")
    split_ids = set(
        identity_ids[i]
        for i in rng.choice(config.identity_count, size=split_count, replace=False)
    )

    records: list[FaceRecord] = []
    vectors: list[np.ndarray] = []
    true_identity: dict[str, str] = {}
    origin_folder: dict[str, str] = {}
    true_merges: list[tuple[str, str]] = []
    planted_dups: list[tuple[str, str]] = []

    def make_attributes(gender: str, race: str) -> Attributes:
        return Attributes(
            age=int(rng.integers(18, 80)),
            gender=gender,
            race=race,
            scenario=VALID_SCENARIOS[int(rng.integers(len(VALID_SCENARIOS)))],
        )

    for idx, iid in enumerate(identity_ids):
        n_faces = int(rng.integers(lo, hi + 1))
        gender = VALID_GENDERS[int(rng.integers(len(VALID_GENDERS)))]
        race = VALID_RACES[int(rng.integers(len(VALID_RACES)))]
        folder_a = iid
        folder_b = f"{iid}x" if iid in split_ids else None
        if folder_b is not None:
            true_merges.append((folder_a, folder_b))
        for j in range(n_faces):
            face_id = f"{iid}_f{j:03d}"
            folder = folder_b if (folder_b is not None and j % 2 == 1) else folder_a
            attrs = make_attributes(gender, race)
            if rng.random() < config.outlier_rate:
                if rng.random() < 0.5:
                    other = identity_ids[
                        (idx + 1 + int(rng.integers(config.identity_count - 1)))
                        % config.identity_count
                    ]
                    true_identity[face_id] = other
                else:
                    true_identity[face_id] = f"{JUNK_PREFIX}{face_id}"
            else:
                true_identity[face_id] = iid
            vec = world.signal_direction(face_id, true_identity[face_id])
            origin_folder[face_id] = folder
            records.append(FaceRecord(face_id, folder, len(records), attrs))
            vectors.append(vec)
            if rng.random() < config.duplicate_rate:
                dup_id = f"{face_id}d"
                dup_vec = normalize(
                    vec.astype(np.float64) + DUP_JITTER * world.dup_jitter(dup_id).astype(np.float64)
                )
                true_identity[dup_id] = true_identity[face_id]
                origin_folder[dup_id] = folder
                planted_dups.append((face_id, dup_id))
                records.append(FaceRecord(dup_id, folder, len(records), attrs))
                vectors.append(dup_vec)

    dataset = Dataset(records)
    embeddings = np.stack(vectors).astype(np.float32)

    majority: dict[str, str] = {}
    for sid, recs in dataset.by_subject.items():
        counts: dict[str, int] = {}
        for rec in recs:
            tid = true_identity[rec.face_id]
            counts[tid] = counts.get(tid, 0) + 1
        majority[sid] = max(sorted(counts), key=lambda t: counts[t])
    dominant = sorted(
        fid for fid, tid in true_identity.items() if majority[origin_folder[fid]] == tid
    )

    truth = GroundTruth(
        seed=config.seed,
        dimension=config.dimension,
        cluster_concentration=config.cluster_concentration,
        true_identity=true_identity,
        origin_folder=origin_folder,
        true_merges=sorted(true_merges),
        planted_duplicates=sorted(planted_dups),
        dominant_faces=dominant,
    )
    return dataset, embeddings, truth


MIN_FIT_SUBJECTS = 10


class ReferenceEmbedder:
    """Generative stand-in for a trained model.

    embed(face) = normalize(s * signal(face) + (1 - s) * noise(face)), where
    signal(face) is the face's true appearance direction and the noise
    vector is fixed per face (a duplicate shares its source's noise: same
    photo, same capture conditions). The signal share ``s`` starts at
    ``signal_floor`` and rises per generation with the measured quality of
    the data the student trained on: s = floor + (1 - floor) * estimate,
    where estimate = purity(cleaned) * |cleaned| / |raw|. More (correctly
    grouped) training data means a better next-generation embedder.
    """

    def __init__(
        self,
        truth: GroundTruth,
        signal_floor: float = 0.6,
        signal_share: float | None = None,
        generation: int = 0,
    ):
        if not 0.0 < signal_floor <= 1.0:
            raise ValueError("signal_floor must be in (0, 1]")
        self.truth = truth
        self.dimension = truth.dimension
        self.signal_floor = signal_floor
        self.signal_share = signal_floor if signal_share is None else signal_share
        self.generation = generation
        self._world = LatentWorld(truth.seed, truth.dimension, truth.cluster_concentration)
        self._dup_source = truth.dup_source()

    def _signal(self, face_id: str) -> np.ndarray:
        src = self._dup_source.get(face_id)
        if src is not None:
            base = self._signal(src).astype(np.float64)
            return normalize(
                base + DUP_JITTER * self._world.dup_jitter(face_id).astype(np.float64)
            )
        tid = self.truth.true_identity.get(face_id)
        if tid is None:
            raise KeyError(f"face {face_id!r} unknown to ground truth")
        return self._world.signal_direction(face_id, tid)

    def _embed_one(self, face_id: str) -> np.ndarray:
        signal = self._signal(face_id).astype(np.float64)
        noise_owner = self._dup_source.get(face_id, face_id)
        scale, direction = self._world.face_noise(noise_owner)
        s = self.signal_share
        return normalize(s * signal + (1.0 - s) * scale * direction.astype(np.float64))

    def embed(self, face_ids) -> np.ndarray:
        out = np.empty((len(face_ids), self.dimension), dtype=np.float32)
        for i, fid in enumerate(face_ids):
            out[i] = self._embed_one(fid)
        return out

    def fit(self, cleaned: Dataset) -> "ReferenceEmbedder":
        if cleaned.subject_count < MIN_FIT_SUBJECTS:
            raise ValueError(
                f"fit: cleaned set has {cleaned.subject_count} subjects, "
                f"need >= {MIN_FIT_SUBJECTS}"
            )
        scores = score_cleaning(cleaned, self.truth)
        purity = scores["purity"] if scores["purity"] is not None else 0.0
        coverage = cleaned.face_count / self.truth.raw_face_count
        estimate = purity * coverage
        share = self.signal_floor + (1.0 - self.signal_floor) * estimate
        return ReferenceEmbedder(
            self.truth,
            signal_floor=self.signal_floor,
            signal_share=share,
            generation=self.generation + 1,
        )


def score_cleaning(cleaned: Dataset, truth: GroundTruth) -> dict:
    """Oracle metrics for a cleaned dataset.

    purity: retained faces matching their cleaned folder's majority true
    identity (None when the cleaned set is empty). face_recall: retained
    dominant faces over generated dominant faces. merge_recall: planted
    split-folder pairs whose retained faces ended under a single subject.
    dup_removal_rate: planted duplicate pairs with at most one side retained.
    """
    for rec in cleaned.records:
        if rec.face_id not in truth.true_identity:
            raise SynthError(f"cleaned face {rec.face_id!r} absent from ground truth")

    if cleaned.face_count == 0:
        purity = None
    else:
        matched = 0
        for sid, recs in cleaned.by_subject.items():
            counts: dict[str, int] = {}
            for rec in recs:
                tid = truth.true_identity[rec.face_id]
                counts[tid] = counts.get(tid, 0) + 1
            matched += max(counts.values())
        purity = matched / cleaned.face_count

    retained = {rec.face_id for rec in cleaned.records}
    dominant = set(truth.dominant_faces)
    face_recall = (
        len(retained & dominant) / len(dominant) if dominant else 0.0
    )

    subject_of = {rec.face_id: rec.subject_id for rec in cleaned.records}
    origin_members: dict[str, list[str]] = {}
    for fid, folder in truth.origin_folder.items():
        origin_members.setdefault(folder, []).append(fid)
    resolved = 0
    for a, b in truth.true_merges:
        subjects = {
            subject_of[f]
            for folder in (a, b)
            for f in origin_members.get(folder, [])
            if f in subject_of
        }
        if len(subjects) <= 1:
            resolved += 1
    merge_recall = resolved / len(truth.true_merges) if truth.true_merges else 1.0

    removed = sum(
        1
        for src, dup in truth.planted_duplicates
        if not (src in retained and dup in retained)
    )
    dup_removal_rate = (
        removed / len(truth.planted_duplicates) if truth.planted_duplicates else 1.0
    )

    return {
        "purity": purity,
        "face_recall": face_recall,
        "merge_recall": merge_recall,
        "dup_removal_rate": dup_removal_rate,
    }
