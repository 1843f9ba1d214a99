"""Time-budgeted 1:1 verification evaluation.

Attribute-sliced pair enumeration, FNMR at fixed FMR, wall-clock stage
measurement, and latency-track classification. Pair counts are computed
combinatorially (exact integers, no pair materialization); pair streams
are deterministic (faces sorted by id, lexicographic pair order).

Within-slice pairing uses all-pairs semantics: attribute slices restrict
both faces to the attribute value, cross-age requires the stated minimum
age gap, cross-scene pairs one controlled with one wild face.
"""

from __future__ import annotations

import os
import statistics
import time
from dataclasses import dataclass
from math import comb
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .dataset import VALID_GENDERS, VALID_RACES, VALID_SCENARIOS
from .vectors import clamp_similarity


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class TestFace:
    __test__ = False  # not a pytest class, despite the name

    face_id: str
    identity_id: str
    age: int
    gender: str
    race: str
    scenario: str

    def validate(self) -> None:
        if self.age < 0:
            raise EvalError(f"face {self.face_id}: negative age")
        if self.gender not in VALID_GENDERS:
            raise EvalError(f"face {self.face_id}: unknown gender {self.gender!r}")
        if self.race not in VALID_RACES:
            raise EvalError(f"face {self.face_id}: unknown race {self.race!r}")
        if self.scenario not in VALID_SCENARIOS:
            raise EvalError(f"face {self.face_id}: unknown scenario {self.scenario!r}")


@dataclass(frozen=True)
class PairSpec:
    kind: str  # all | cross_age | race | gender | controlled | wild | cross_scene
    param: object = None

    _KINDS = ("all", "cross_age", "race", "gender", "controlled", "wild", "cross_scene")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise EvalError(f"unknown slice kind {self.kind!r}")
        if self.kind == "cross_age" and (not isinstance(self.param, int) or self.param < 1):
            raise EvalError("cross_age slice needs a positive integer gap")
        if self.kind == "race" and self.param not in VALID_RACES:
            raise EvalError(f"unknown race {self.param!r}")
        if self.kind == "gender" and self.param not in VALID_GENDERS:
            raise EvalError(f"unknown gender {self.param!r}")

    def name(self) -> str:
        if self.kind in ("all", "controlled", "wild", "cross_scene"):
            return self.kind
        return f"{self.kind}_{self.param}"

    @classmethod
    def parse(cls, text: str) -> "PairSpec":
        t = text.strip()
        if t in ("all", "controlled", "wild", "cross_scene"):
            return cls(t)
        if t.startswith("cross_age_"):
            return cls("cross_age", int(t[len("cross_age_"):]))
        if t.startswith("race_"):
            return cls("race", t[len("race_"):])
        if t.startswith("gender_"):
            return cls("gender", t[len("gender_"):])
        raise EvalError(f"cannot parse slice {text!r}")


STANDARD_SLICES = (
    PairSpec("all"),
    PairSpec("cross_age", 10),
    PairSpec("cross_age", 20),
    PairSpec("race", "Caucasian"),
    PairSpec("race", "EastAsian"),
    PairSpec("race", "African"),
    PairSpec("gender", "Male"),
    PairSpec("gender", "Female"),
    PairSpec("controlled"),
    PairSpec("wild"),
    PairSpec("cross_scene"),
)


def _validate_faces(faces: Sequence[TestFace]) -> list[TestFace]:
    seen = set()
    for f in faces:
        f.validate()
        if f.face_id in seen:
            raise EvalError(f"duplicate face_id {f.face_id!r}")
        seen.add(f.face_id)
    return sorted(faces, key=lambda f: f.face_id)


def _members(faces: Sequence[TestFace], spec: PairSpec) -> list[TestFace]:
    if spec.kind in ("all", "cross_age", "cross_scene"):
        return list(faces)
    if spec.kind == "race":
        return [f for f in faces if f.race == spec.param]
    if spec.kind == "gender":
        return [f for f in faces if f.gender == spec.param]
    if spec.kind == "controlled":
        return [f for f in faces if f.scenario == "Controlled"]
    return [f for f in faces if f.scenario == "Wild"]


def _pair_ok(a: TestFace, b: TestFace, spec: PairSpec) -> bool:
    if spec.kind == "cross_age":
        return abs(a.age - b.age) >= spec.param
    if spec.kind == "cross_scene":
        return {a.scenario, b.scenario} == {"Controlled", "Wild"}
    return True


def pair_counts(faces: Sequence[TestFace], spec: PairSpec) -> tuple[int, int]:
    """Exact (genuine, impostor) counts for the slice, no materialization."""
    members = _members(_validate_faces(faces), spec)
    by_id: dict[str, list[TestFace]] = {}
    for f in members:
        by_id.setdefault(f.identity_id, []).append(f)

    if spec.kind == "cross_age":
        hist: dict[int, int] = {}
        for f in members:
            hist[f.age] = hist.get(f.age, 0) + 1
        ages = sorted(hist)
        total = 0
        for i, a in enumerate(ages):
            for b in ages[i:]:
                if b - a < spec.param:
                    continue
                total += hist[a] * hist[b] if a != b else comb(hist[a], 2)
        genuine = sum(
            1
            for group in by_id.values()
            for i in range(len(group))
            for j in range(i + 1, len(group))
            if abs(group[i].age - group[j].age) >= spec.param
        )
    elif spec.kind == "cross_scene":
        n_c = sum(1 for f in members if f.scenario == "Controlled")
        n_w = len(members) - n_c
        total = n_c * n_w
        genuine = sum(
            sum(1 for f in group if f.scenario == "Controlled")
            * sum(1 for f in group if f.scenario == "Wild")
            for group in by_id.values()
        )
    else:
        total = comb(len(members), 2)
        genuine = sum(comb(len(group), 2) for group in by_id.values())
    return genuine, total - genuine


def all_slice_impostor_count(face_count: int, genuine_count: int) -> int:
    """For the unrestricted slice: impostors = C(n, 2) - genuine."""
    return comb(face_count, 2) - genuine_count


def enumerate_pairs(faces: Sequence[TestFace], spec: PairSpec):
    """(genuine stream, impostor stream, (genuine_count, impostor_count)).

    Streams yield (face_a, face_b) with face_a.face_id < face_b.face_id in
    lexicographic pair order; no self pairs, no pair twice, streams
    disjoint by construction.
    """
    ordered = _members(_validate_faces(faces), spec)

    def stream(want_genuine: bool) -> Iterator[tuple[TestFace, TestFace]]:
        for i in range(len(ordered)):
            a = ordered[i]
            for j in range(i + 1, len(ordered)):
                b = ordered[j]
                if (a.identity_id == b.identity_id) is want_genuine and _pair_ok(a, b, spec):
                    yield a, b

    counts = pair_counts(faces, spec)
    return stream(True), stream(False), counts


def fmr(impostor_scores, threshold: float) -> float:
    """Share of impostor scores at or above the threshold."""
    arr = np.asarray(impostor_scores, dtype=np.float64)
    if arr.size == 0:
        raise EvalError("fmr: empty impostor scores")
    return float(np.count_nonzero(arr >= threshold)) / arr.size


def fnmr(genuine_scores, threshold: float) -> float:
    """Share of genuine scores strictly below the threshold."""
    arr = np.asarray(genuine_scores, dtype=np.float64)
    if arr.size == 0:
        raise EvalError("fnmr: empty genuine scores")
    return float(np.count_nonzero(arr < threshold)) / arr.size


@dataclass
class ScoreSet:
    genuine_scores: np.ndarray
    impostor_scores: np.ndarray

    def __post_init__(self):
        self.genuine_scores = np.asarray(self.genuine_scores, dtype=np.float64)
        self.impostor_scores = np.asarray(self.impostor_scores, dtype=np.float64)
        if self.genuine_scores.size == 0 or self.impostor_scores.size == 0:
            raise EvalError("ScoreSet needs at least one genuine and one impostor score")
        if not (
            np.isfinite(self.genuine_scores).all() and np.isfinite(self.impostor_scores).all()
        ):
            raise EvalError("ScoreSet scores must be finite")


def fnmr_at_fmr(scores: ScoreSet, target_fmr: float) -> tuple[float, float]:
    """Smallest observed-score threshold whose FMR is at or below the
    target (with a +inf sentinel), and the FNMR there."""
    if not 0.0 < target_fmr <= 1.0:
        raise EvalError(f"target_fmr must be in (0, 1], got {target_fmr}")
    imp = np.sort(scores.impostor_scores)
    candidates = np.unique(np.concatenate([scores.genuine_scores, scores.impostor_scores]))
    fmrs = (imp.size - np.searchsorted(imp, candidates, side="left")) / imp.size
    ok = fmrs <= target_fmr
    if ok.any():
        threshold = float(candidates[int(np.argmax(ok))])
    else:
        threshold = float("inf")
    return threshold, fnmr(scores.genuine_scores, threshold)


class CosineMatcher:
    """Scores a pair as the cosine of the two faces' embeddings."""

    def __init__(self, embeddings_by_face: dict[str, np.ndarray]):
        self._emb = {k: np.asarray(v, dtype=np.float64) for k, v in embeddings_by_face.items()}

    def __call__(self, a: TestFace, b: TestFace) -> float:
        return clamp_similarity(float(self._emb[a.face_id] @ self._emb[b.face_id]))

    def score_batch(self, pairs: list[tuple[TestFace, TestFace]]) -> np.ndarray:
        left = np.stack([self._emb[a.face_id] for a, _ in pairs])
        right = np.stack([self._emb[b.face_id] for _, b in pairs])
        return np.clip(np.einsum("ij,ij->i", left, right), -1.0, 1.0)


def _score_stream(matcher, stream: Iterable, chunk: int = 8192) -> np.ndarray:
    out = []
    batcher = getattr(matcher, "score_batch", None)
    buf: list[tuple[TestFace, TestFace]] = []

    def flush():
        if not buf:
            return
        if batcher is not None:
            out.append(np.asarray(batcher(list(buf)), dtype=np.float64))
        else:
            vals = []
            for a, b in buf:
                try:
                    vals.append(float(matcher(a, b)))
                except Exception as exc:
                    raise RuntimeError(
                        f"matcher failed on pair ({a.face_id}, {b.face_id}): {exc}"
                    ) from exc
            out.append(np.asarray(vals, dtype=np.float64))
        buf.clear()

    for pair in stream:
        buf.append(pair)
        if len(buf) >= chunk:
            flush()
    flush()
    if not out:
        return np.empty(0, dtype=np.float64)
    return np.concatenate(out)


def _reservoir(stream: Iterable, count: int, seed: int) -> list:
    rng = np.random.default_rng(np.random.SeedSequence([abs(seed), 0x53414D50]))
    kept: list = []
    for n, item in enumerate(stream):
        if n < count:
            kept.append(item)
        else:
            j = int(rng.integers(0, n + 1))
            if j < count:
                kept[j] = item
    return kept


def error_curve(scores: ScoreSet, max_points: int = 200) -> dict:
    """Paired (threshold, fmr, fnmr) arrays over the observed-score sweep,
    downsampled to at most ``max_points`` thresholds."""
    candidates = np.unique(np.concatenate([scores.genuine_scores, scores.impostor_scores]))
    if candidates.size > max_points:
        idx = np.unique(np.linspace(0, candidates.size - 1, max_points).round().astype(int))
        candidates = candidates[idx]
    imp = np.sort(scores.impostor_scores)
    gen = np.sort(scores.genuine_scores)
    fmrs = (imp.size - np.searchsorted(imp, candidates, side="left")) / imp.size
    fnmrs = np.searchsorted(gen, candidates, side="left") / gen.size
    return {
        "threshold": [float(t) for t in candidates],
        "fmr": [float(v) for v in fmrs],
        "fnmr": [float(v) for v in fnmrs],
    }


def verify_report(
    matcher,
    faces: Sequence[TestFace],
    specs: Sequence[PairSpec],
    fmr_targets: Sequence[float],
    max_impostor_pairs: int | None = None,
    seed: int = 0,
) -> dict:
    """Per-slice FNMR at each FMR target, plus the full error curve.

    Impostor streams larger than ``max_impostor_pairs`` are reservoir
    subsampled (seeded) and flagged in the report.
    """
    report: dict = {"fmr_targets": [float(t) for t in fmr_targets], "seed": seed, "slices": {}}
    for spec in specs:
        genuine_stream, impostor_stream, (n_gen, n_imp) = enumerate_pairs(faces, spec)
        if n_gen == 0 or n_imp == 0:
            raise EvalError(f"slice {spec.name()}: no genuine or no impostor pairs")
        gen_scores = _score_stream(matcher, genuine_stream)
        subsampled = max_impostor_pairs is not None and n_imp > max_impostor_pairs
        if subsampled:
            pairs = _reservoir(impostor_stream, max_impostor_pairs, seed)
            imp_scores = _score_stream(matcher, pairs)
        else:
            imp_scores = _score_stream(matcher, impostor_stream)
        scores = ScoreSet(gen_scores, imp_scores)
        entry = {
            "genuine_count": n_gen,
            "impostor_count": n_imp,
            "scored_genuine": int(gen_scores.size),
            "scored_impostor": int(imp_scores.size),
            "impostor_subsampled": bool(subsampled),
            "fnmr_at": {},
            "curve": error_curve(scores),
        }
        for target in fmr_targets:
            thr, rate = fnmr_at_fmr(scores, float(target))
            entry["fnmr_at"][str(float(target))] = {"threshold": thr, "fnmr": rate}
        report["slices"][spec.name()] = entry
    return report


def attribute_normalization(reports: dict[str, dict], target: float) -> dict[str, dict[str, float]]:
    """Radar-plot scaling across models: 1.0 for the best FNMR in a slice,
    0.5 + 0.5 * best/this for the rest, clamped to [0.5, 1.0]."""
    key = str(float(target))
    slices: set[str] = set()
    for rep in reports.values():
        slices.update(rep["slices"])
    out: dict[str, dict[str, float]] = {m: {} for m in reports}
    for sl in sorted(slices):
        vals = {
            m: rep["slices"][sl]["fnmr_at"][key]["fnmr"]
            for m, rep in reports.items()
            if sl in rep["slices"]
        }
        best = min(vals.values())
        for m, v in vals.items():
            if v == 0.0:
                norm = 1.0
            elif best == 0.0:
                norm = 0.5
            else:
                norm = 0.5 + 0.5 * (best / v)
            out[m][sl] = min(1.0, max(0.5, norm))
    return out


@dataclass(frozen=True)
class TrackBudget:
    track: str
    limit_ms: int | None


_TRACKS = (("FRUITS100", 100), ("FRUITS500", 500), ("FRUITS1000", 1000))


def classify_track(measured_ms: float) -> TrackBudget:
    """Latency track for a whole-pipeline time; boundaries inclusive."""
    if measured_ms < 0:
        raise EvalError(f"negative measurement {measured_ms}")
    for name, limit in _TRACKS:
        if measured_ms <= limit:
            return TrackBudget(name, limit)
    return TrackBudget("OverBudget", None)


def measure_pipeline(
    stages: Sequence[tuple[str, Callable[[], object]]],
    repetitions: int = 5,
    warmup: int = 3,
) -> dict:
    """Median wall-clock per stage over ``repetitions`` timed runs after
    ``warmup`` discarded runs; total is the sum of stage medians. Runs
    strictly single-threaded; single-core affinity is requested where the
    platform permits and recorded either way."""
    if repetitions < 1:
        raise EvalError("repetitions must be >= 1")
    affinity = "unavailable"
    old_mask = None
    if hasattr(os, "sched_setaffinity"):
        try:
            old_mask = os.sched_getaffinity(0)
            cpu = min(old_mask)
            os.sched_setaffinity(0, {cpu})
            affinity = f"pinned_cpu{cpu}"
        except OSError:
            old_mask = None
    try:
        stage_rows = {}
        total = 0.0
        for name, fn in stages:
            runs = []
            for i in range(warmup + repetitions):
                start = time.perf_counter()
                try:
                    fn()
                except Exception as exc:
                    raise RuntimeError(f"stage {name!r} failed: {exc}") from exc
                elapsed = (time.perf_counter() - start) * 1000.0
                if i >= warmup:
                    runs.append(elapsed)
            med = float(statistics.median(runs))
            stage_rows[name] = {"median_ms": med, "runs_ms": runs}
            total += med
        return {
            "stages": stage_rows,
            "total_ms": total,
            "repetitions": repetitions,
            "warmup": warmup,
            "affinity": affinity,
        }
    finally:
        if old_mask is not None:
            os.sched_setaffinity(0, old_mask)
