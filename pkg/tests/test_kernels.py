import numpy as np
import pytest

from castfruits import _core_py, kernels

from oracles import brute_pair_scan, cap_instance

try:
    from castfruits import _core

    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False


def _points(seed, n=120, d=24):
    return cap_instance(np.random.default_rng(seed), n, d)


def test_gram_matches_numpy_reference():
    x = _points(0)
    gram = kernels.cosine_gram(x)
    expect = x.astype(np.float64) @ x.astype(np.float64).T
    assert np.allclose(gram, expect, atol=1e-10)


def test_pairs_above_matches_brute_force():
    x = _points(1, n=80)
    ii, jj, sims = kernels.pairs_above(x, 0.5, strict=False)
    expect = brute_pair_scan(x, 0.5)
    got = sorted(zip(ii.tolist(), jj.tolist(), sims.tolist()))
    expect_sorted = sorted(expect)
    assert [(i, j) for i, j, _ in got] == [(i, j) for i, j, _ in expect_sorted]
    assert np.allclose(
        [s for _, _, s in got], [s for _, _, s in expect_sorted], atol=1e-9
    )


def test_pairs_above_strict_flag():
    x = np.stack([np.eye(4, dtype=np.float32)[0]] * 3)
    ii, jj, sims = kernels.pairs_above(x, 1.0, strict=False)
    assert len(ii) == 3
    ii, jj, sims = kernels.pairs_above(x, 1.0, strict=True)
    assert len(ii) == 0


def test_pairs_row_major_order():
    x = _points(2, n=50)
    ii, jj, _ = kernels.pairs_above(x, 0.3, strict=False)
    order = list(zip(ii.tolist(), jj.tolist()))
    assert order == sorted(order)
    assert all(i < j for i, j in order)


def test_max_cross_sim_matches_reference():
    a = _points(3, n=40)
    b = _points(4, n=25)
    got = kernels.max_cross_sim(a, b)
    expect = (a.astype(np.float64) @ b.astype(np.float64).T).max(axis=1)
    assert np.allclose(got, expect, atol=1e-10)


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled extension not built")
@pytest.mark.parametrize("seed", range(6))
def test_backends_agree(seed):
    x = _points(seed, n=100, d=16)
    g1 = _core.cosine_gram(x)
    g2 = _core_py.cosine_gram(x)
    assert np.allclose(g1, g2, atol=1e-12)

    for eps, min_pts in [(0.2, 2), (0.35, 3), (0.5, 4)]:
        l1, c1 = _core.dbscan_labels(x, eps, min_pts)
        l2, c2 = _core_py.dbscan_labels(x, eps, min_pts)
        assert np.array_equal(l1, l2)
        assert np.array_equal(c1, c2)

    for strict in (False, True):
        p1 = _core.pairs_above(x, 0.6, strict)
        p2 = _core_py.pairs_above(x, 0.6, strict)
        assert np.array_equal(p1[0], p2[0])
        assert np.array_equal(p1[1], p2[1])
        assert np.allclose(p1[2], p2[2], atol=1e-12)

    m1 = _core.max_cross_sim(x[:30], x[30:])
    m2 = _core_py.max_cross_sim(x[:30], x[30:])
    assert np.allclose(m1, m2, atol=1e-12)


def test_backend_name_exported():
    assert kernels.BACKEND in ("compiled", "python")
