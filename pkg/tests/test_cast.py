import numpy as np
import pytest

from castfruits.cast import (
    CastConfig,
    PipelineCollapse,
    SimilarityHistograms,
    StageStats,
    StaticEmbedder,
    canonical_rows,
    histogram_overlap,
    run_cast,
    similarity_histograms,
    validate_stage_stats,
)
from castfruits.dataset import Dataset, FaceRecord
from castfruits.synth import ReferenceEmbedder, SynthConfig, generate, score_cleaning
from castfruits.vectors import normalize


def make_static(ds: Dataset, emb: np.ndarray) -> StaticEmbedder:
    ids = [None] * emb.shape[0]
    for rec in ds.records:
        ids[rec.embedding_row] = rec.face_id
    return StaticEmbedder(ids, [emb])


def folder_dataset(vectors_by_subject):
    records, rows = [], []
    for sid in sorted(vectors_by_subject):
        for j, vec in enumerate(vectors_by_subject[sid]):
            records.append(FaceRecord(f"{sid}_f{j:02d}", sid, len(rows)))
            rows.append(np.asarray(vec, dtype=np.float32))
    return Dataset(records), np.stack(rows)


def test_histogram_identical_vectors_mass_at_one():
    v = normalize(np.ones(8))
    ds, emb = folder_dataset({"a": [v] * 6, "b": [np.eye(8, dtype=np.float32)[2]] * 3})
    hist = similarity_histograms(ds, make_static(ds, emb), sample=2, seed=0)
    # folder "a" contributes C(6,2)=15 pairs at similarity 1.0 (last bin)
    assert hist.intra_counts[-1] >= 15
    assert hist.intra_counts.sum() == 15 + 3


def test_histogram_orthogonal_centroids_mass_at_zero():
    ds, emb = folder_dataset(
        {"a": [np.eye(8, dtype=np.float32)[0]] * 3, "b": [np.eye(8, dtype=np.float32)[1]] * 3}
    )
    hist = similarity_histograms(ds, make_static(ds, emb), sample=2, seed=0)
    assert hist.inter_counts.sum() == 1
    zero_bin = np.searchsorted(hist.bin_edges(), 0.0, side="right") - 1
    assert hist.inter_counts[zero_bin] == 1


def test_histogram_totals_match_brute_pair_counts():
    rng = np.random.default_rng(0)
    cfg = SynthConfig(identity_count=30, faces_per_identity=(3, 9), dimension=16, seed=3)
    ds, emb, _ = generate(cfg)
    sample = 20
    hist = similarity_histograms(ds, make_static(ds, emb), sample=sample, seed=1)
    assert hist.inter_counts.sum() == sample * (sample - 1) // 2
    # intra totals: sum of C(n,2) over the seeded folder choice
    sizes = sorted(len(v) for v in ds.by_subject.values())
    total = hist.intra_counts.sum()
    assert total <= sum(n * (n - 1) // 2 for n in sizes)
    assert total > 0


def test_histogram_deterministic_and_sample_validation():
    cfg = SynthConfig(identity_count=20, faces_per_identity=(3, 5), dimension=8, seed=4)
    ds, emb, _ = generate(cfg)
    st = make_static(ds, emb)
    h1 = similarity_histograms(ds, st, sample=10, seed=7)
    h2 = similarity_histograms(ds, st, sample=10, seed=7)
    assert np.array_equal(h1.intra_counts, h2.intra_counts)
    assert np.array_equal(h1.inter_counts, h2.inter_counts)
    with pytest.raises(ValueError):
        similarity_histograms(ds, st, sample=0, seed=0)
    with pytest.raises(ValueError):
        similarity_histograms(ds, st, sample=10_000, seed=0)


def test_overlap_identical_and_disjoint():
    a = np.zeros(200, dtype=np.int64)
    a[50:60] = 7
    ident = SimilarityHistograms(intra_counts=a, inter_counts=a * 3)
    assert histogram_overlap(ident) == pytest.approx(1.0)
    b = np.zeros(200, dtype=np.int64)
    b[100:110] = 5
    disjoint = SimilarityHistograms(intra_counts=a, inter_counts=b)
    assert histogram_overlap(disjoint) == 0.0


def test_overlap_closed_form_half():
    # intra uniform over [0.8, 1.0] (20 bins), inter uniform over
    # [0.9, 1.0] (10 bins), equal mass -> overlap 0.5
    intra = np.zeros(200, dtype=np.int64)
    inter = np.zeros(200, dtype=np.int64)
    intra[180:200] = 5
    inter[190:200] = 10
    hist = SimilarityHistograms(intra_counts=intra, inter_counts=inter)
    assert histogram_overlap(hist) == pytest.approx(0.5, abs=1e-12)


def test_overlap_rejects_empty():
    zero = np.zeros(200, dtype=np.int64)
    with pytest.raises(ValueError, match="empty"):
        histogram_overlap(SimilarityHistograms(intra_counts=zero, inter_counts=zero))


def test_fixed_point_on_clean_world():
    cfg = SynthConfig(identity_count=15, faces_per_identity=(5, 8), dimension=512, seed=9)
    ds, emb, truth = generate(cfg)
    perfect = ReferenceEmbedder(truth, signal_share=1.0)
    result = run_cast(ds, perfect, CastConfig(iterations=1, histogram_sample=10))
    assert sorted(result.cleaned.face_ids()) == sorted(ds.face_ids())
    assert result.cleaned.subject_count == ds.subject_count


def test_static_embedder_round():
    cfg = SynthConfig(identity_count=15, faces_per_identity=(5, 8), dimension=32, seed=10)
    ds, emb, _ = generate(cfg)
    st = make_static(ds, emb)
    result = run_cast(ds, st, CastConfig(iterations=2, histogram_sample=10))
    assert result.cleaned.face_count > 0
    assert result.final_embedder.generation == 2
    # cleaned rows index into the returned matrix
    assert result.embeddings.shape[0] == result.cleaned.face_count


def test_static_embedder_generation_sequence():
    ids = ["a", "b"]
    m0 = np.eye(2, dtype=np.float32)
    m1 = np.eye(2, dtype=np.float32)[::-1].copy()
    st = StaticEmbedder(ids, [m0, m1])
    assert np.array_equal(st.embed(["a"]), m0[:1])
    recs = [FaceRecord(f"s{i}_f{j}", f"s{i}", 0) for i in range(10) for j in range(2)]
    nxt = st.fit(Dataset(recs))
    assert np.array_equal(nxt.embed(["a"]), m1[:1])
    third = nxt.fit(Dataset(recs))
    assert np.array_equal(third.embed(["a"]), m1[:1])  # clamps at last matrix
    with pytest.raises(KeyError):
        st.embed(["ghost"])


def test_static_embedder_validation():
    with pytest.raises(ValueError):
        StaticEmbedder(["a"], [])
    with pytest.raises(ValueError):
        StaticEmbedder(["a", "b"], [np.eye(3, dtype=np.float32)])


def test_run_cast_stats_shape_and_validation():
    cfg = SynthConfig(
        identity_count=40, faces_per_identity=(8, 12), dimension=64,
        outlier_rate=0.2, overlap_rate=0.05, duplicate_rate=0.02, seed=12,
    )
    ds, _, truth = generate(cfg)
    result = run_cast(ds, ReferenceEmbedder(truth), CastConfig(iterations=2, histogram_sample=20))
    stages = [s.stage for s in result.stats]
    assert stages == [
        "raw", "intra", "inter", "intra", "inter",
        "remove_duplicates", "remove_test_overlaps", "enforce_min_faces",
    ]
    validate_stage_stats(result.stats)
    assert len(result.histograms) == 2
    assert len(result.overlaps) == 2
    assert len(result.actions) == 2


def test_run_cast_recleans_from_raw():
    # a later, better teacher recovers faces the first teacher dropped,
    # which is only possible when every iteration restarts from raw
    cfg = SynthConfig(
        identity_count=40, faces_per_identity=(10, 14), dimension=64,
        outlier_rate=0.2, seed=13,
    )
    ds, _, truth = generate(cfg)
    result = run_cast(ds, ReferenceEmbedder(truth), CastConfig(iterations=3, histogram_sample=20))
    intra_faces = [s.face_count for s in result.stats if s.stage == "intra"]
    inter_faces = [s.face_count for s in result.stats if s.stage == "inter"]
    assert intra_faces[1] > inter_faces[0]


def test_run_cast_purity_non_decreasing_and_scores():
    cfg = SynthConfig(
        identity_count=60, faces_per_identity=(10, 14), dimension=64,
        outlier_rate=0.3, overlap_rate=0.05, duplicate_rate=0.02, seed=14,
    )
    ds, _, truth = generate(cfg)
    working, face_ids = canonical_rows(ds)
    teacher = ReferenceEmbedder(truth)
    from castfruits.inter import resolve_folders
    from castfruits.intra import clean_dataset

    purities = []
    cast_cfg = CastConfig(iterations=3, histogram_sample=20)
    for _ in range(3):
        emb = teacher.embed(face_ids)
        intra_ds = clean_dataset(working, emb, cast_cfg.intra)
        inter_ds, _ = resolve_folders(intra_ds, emb, cast_cfg.inter)
        purities.append(score_cleaning(inter_ds, truth)["purity"])
        teacher = teacher.fit(inter_ds)
    assert all(b >= a - 1e-12 for a, b in zip(purities, purities[1:]))
    assert purities[-1] >= 0.95


def test_run_cast_collapse_error():
    # all folders have two faces: the dominant-cluster floor drops
    # everything in iteration 1
    vecs = {}
    for i in range(12):
        v = normalize(np.random.default_rng(i).standard_normal(16))
        vecs[f"s{i:02d}"] = [v, v]
    ds, emb = folder_dataset(vecs)
    with pytest.raises(PipelineCollapse):
        run_cast(ds, make_static(ds, emb), CastConfig(iterations=1, histogram_sample=5))


def test_run_cast_empty_input_rejected():
    with pytest.raises(ValueError):
        run_cast(Dataset([]), None, CastConfig(iterations=1))


def test_validate_accepts_large_scale_reference_sequence():
    # counts shaped like a full-scale three-iteration run; iteration-2
    # intra exceeding iteration-1 inter is legal because every iteration
    # re-cleans the raw dataset
    rows = [
        StageStats("raw", 0, 4_008_130, 260_890_076),
        StageStats("intra", 1, 3_341_761, 61_792_387),
        StageStats("inter", 1, 2_437_140, 50_672_354),
        StageStats("intra", 2, 3_027_814, 60_274_892),
        StageStats("inter", 2, 2_176_427, 47_352_741),
        StageStats("intra", 3, 2_878_886, 58_155_345),
        StageStats("inter", 3, 2_070_870, 46_220_417),
        StageStats("remove_duplicates", 3, 2_070_870, 43_977_802),
        StageStats("remove_test_overlaps", 3, 2_059_906, 42_474_558),
    ]
    validate_stage_stats(rows)
    assert rows[3].face_count > rows[2].face_count  # the cross-iteration bump


def test_run_cast_embedder_failure_has_iteration_context():
    cfg = SynthConfig(identity_count=12, faces_per_identity=(4, 6), dimension=16, seed=21)
    ds, _, _ = generate(cfg)

    class Broken:
        dimension = 16

        def embed(self, face_ids):
            raise IOError("disk on fire")

        def fit(self, cleaned):
            return self

    with pytest.raises(RuntimeError, match="iteration 1.*embedder failed"):
        run_cast(ds, Broken(), CastConfig(iterations=1, histogram_sample=5))


def test_validate_stage_stats_catches_violations():
    rows = [
        StageStats("raw", 0, 10, 100),
        StageStats("intra", 1, 10, 80),
        StageStats("inter", 1, 10, 90),  # inter > intra
    ]
    with pytest.raises(ValueError, match="inter <= intra <= raw"):
        validate_stage_stats(rows)
    rows = [
        StageStats("raw", 0, 10, 100),
        StageStats("intra", 1, 10, 80),
        StageStats("inter", 1, 9, 75),
        StageStats("remove_duplicates", 1, 9, 80),  # grew
    ]
    with pytest.raises(ValueError, match="increased"):
        validate_stage_stats(rows)


def test_config_validation():
    with pytest.raises(ValueError):
        CastConfig(iterations=0)
    with pytest.raises(ValueError):
        CastConfig(histogram_sample=0)
