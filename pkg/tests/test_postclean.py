import itertools
import logging

import numpy as np
import pytest

from castfruits.dataset import Dataset, FaceRecord
from castfruits.postclean import (
    PostCleanConfig,
    dedup_subject,
    enforce_min_faces,
    post_clean,
    remove_test_overlap,
)
from castfruits.vectors import normalize

CFG = PostCleanConfig()


def vectors_with_gram(gram):
    """Unit vectors realizing a given positive-definite similarity matrix."""
    g = np.asarray(gram, dtype=np.float64)
    chol = np.linalg.cholesky(g)
    return chol.astype(np.float32)


def brute_dedup(face_ids, mat, cfg):
    """Exhaustive component enumeration + keep-closest-to-centroid."""
    n = len(face_ids)
    md = np.asarray(mat, dtype=np.float64)
    adj = {i: set() for i in range(n)}
    for i, j in itertools.combinations(range(n), 2):
        if float(md[i] @ md[j]) > cfg.duplicate_threshold:
            adj[i].add(j)
            adj[j].add(i)
    center = md.mean(axis=0)
    center /= np.linalg.norm(center)
    seen, keep = set(), []
    for i in range(n):
        if i in seen:
            continue
        comp, stack = [], [i]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            comp.append(u)
            stack.extend(adj[u] - seen)
        keep.append(min(comp, key=lambda k: (-(md[k] @ center), face_ids[k])))
    kept = {face_ids[i] for i in keep}
    return [f for f in face_ids if f in kept]


def test_pair_above_threshold_deduped():
    # asymmetric third face pins down which of the near-duplicates is
    # closer to the subject centroid
    gram = [
        [1.0, 0.97, 0.60],
        [0.97, 1.0, 0.50],
        [0.60, 0.50, 1.0],
    ]
    mat = vectors_with_gram(gram)
    ids = ["a", "b", "c"]
    keep = dedup_subject(ids, mat, CFG)
    assert keep == brute_dedup(ids, mat, CFG)
    assert "c" in keep and len(keep) == 2
    assert keep == ["a", "c"]  # a is pulled toward c, hence nearer the centroid


def test_all_below_threshold_unchanged():
    rng = np.random.default_rng(0)
    mat = np.stack([normalize(rng.standard_normal(16)) for _ in range(6)])
    ids = [f"f{i}" for i in range(6)]
    assert dedup_subject(ids, mat, CFG) == ids


def test_chain_matches_exhaustive_oracle():
    gram = [
        [1.0, 0.96, 0.90],
        [0.96, 1.0, 0.96],
        [0.90, 0.96, 1.0],
    ]
    mat = vectors_with_gram(gram)
    ids = ["a", "b", "c"]
    keep = dedup_subject(ids, mat, CFG)
    assert keep == brute_dedup(ids, mat, CFG)
    assert len(keep) == 1  # one connected component keeps one face


@pytest.mark.parametrize("seed", range(10))
def test_dedup_random_properties(seed):
    rng = np.random.default_rng(seed)
    center = normalize(rng.standard_normal(16))
    mat = np.stack(
        [normalize(center + rng.uniform(0.01, 0.6) * rng.standard_normal(16)) for _ in range(25)]
    )
    ids = [f"f{i:02d}" for i in range(25)]
    keep = dedup_subject(ids, mat, CFG)
    assert keep == brute_dedup(ids, mat, CFG)
    assert 1 <= len(keep) <= 25
    # no surviving pair above the threshold
    rows = [ids.index(f) for f in keep]
    sub = mat[rows].astype(np.float64)
    gram = sub @ sub.T
    iu = np.triu_indices(len(rows), k=1)
    assert (gram[iu] <= CFG.duplicate_threshold + 1e-12).all()
    # idempotent
    assert dedup_subject(keep, mat[rows], CFG) == keep


def test_dedup_never_empties_subject():
    mat = np.tile(normalize(np.ones(8)), (10, 1)).astype(np.float32)
    ids = [f"f{i}" for i in range(10)]
    keep = dedup_subject(ids, mat, CFG)
    assert keep == ["f0"]


def test_overlap_identical_centroid_dropped():
    c = normalize(np.ones(8))
    kept = remove_test_overlap(["s0"], c[None, :], c[None, :], CFG)
    assert kept == []


def test_overlap_all_low_retained():
    subjects = np.eye(8, dtype=np.float32)[:4]
    tests = np.stack([normalize(np.ones(8))])
    kept = remove_test_overlap([f"s{i}" for i in range(4)], subjects, tests, CFG)
    assert kept == [f"s{i}" for i in range(4)]


def test_overlap_matches_naive_max_scan():
    rng = np.random.default_rng(1)
    subs = np.stack([normalize(rng.standard_normal(16)) for _ in range(50)])
    tests = np.stack([normalize(rng.standard_normal(16)) for _ in range(10)])
    sids = [f"s{i:02d}" for i in range(50)]
    kept = remove_test_overlap(sids, subs, tests, CFG)
    best = (subs.astype(np.float64) @ tests.astype(np.float64).T).max(axis=1)
    expect = [sid for sid, b in zip(sids, best) if b <= CFG.overlap_threshold]
    assert kept == expect


def test_overlap_monotone_in_threshold():
    rng = np.random.default_rng(2)
    subs = np.stack([normalize(rng.standard_normal(16)) for _ in range(40)])
    tests = np.stack([normalize(rng.standard_normal(16)) for _ in range(5)])
    sids = [f"s{i:02d}" for i in range(40)]
    kept_low = set(remove_test_overlap(sids, subs, tests, PostCleanConfig(overlap_threshold=0.3)))
    kept_high = set(remove_test_overlap(sids, subs, tests, PostCleanConfig(overlap_threshold=0.8)))
    assert kept_low <= kept_high


def test_overlap_empty_test_set_warns(caplog):
    subs = np.eye(8, dtype=np.float32)[:2]
    with caplog.at_level(logging.WARNING):
        kept = remove_test_overlap(["a", "b"], subs, None, CFG)
    assert kept == ["a", "b"]
    assert any("empty test set" in r.message for r in caplog.records)


def _dataset(sizes: dict[str, int]):
    records = []
    row = 0
    for sid, n in sorted(sizes.items()):
        for j in range(n):
            records.append(FaceRecord(f"{sid}_f{j}", sid, row))
            row += 1
    return Dataset(records)


def test_enforce_min_faces():
    ds = _dataset({"a": 2, "b": 3, "c": 5})
    out = enforce_min_faces(ds, CFG)
    assert sorted(out.by_subject) == ["b", "c"]
    assert enforce_min_faces(Dataset([]), CFG) == Dataset([])


def test_post_clean_counts_non_increasing():
    rng = np.random.default_rng(3)
    records, rows = [], []
    for s in range(8):
        center = normalize(rng.standard_normal(16))
        for j in range(6):
            records.append(FaceRecord(f"s{s}_f{j}", f"s{s}", len(rows)))
            jitter = 0.001 if j % 3 == 0 else 0.3
            rows.append(normalize(center + jitter * rng.standard_normal(16)))
    ds = Dataset(records)
    emb = np.stack(rows).astype(np.float32)
    out, stages = post_clean(ds, emb, CFG, test_centroids=None)
    prev_faces, prev_ids = ds.face_count, ds.subject_count
    for _, ids, faces in stages:
        assert faces <= prev_faces and ids <= prev_ids
        prev_faces, prev_ids = faces, ids
    assert out.face_count == stages[-1][2]


def test_config_validation():
    with pytest.raises(ValueError):
        PostCleanConfig(duplicate_threshold=1.0)
    with pytest.raises(ValueError):
        PostCleanConfig(min_faces_per_identity=0)
