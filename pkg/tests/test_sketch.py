import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochlsq import (
    DimensionError,
    GeneralizedKaczmarz,
    KaczmarzUniformColumns,
    SparseRademacher,
    SparseRandom,
    beta_of,
    block_kaczmarz,
    draw,
    kaczmarz_partition,
    row_kaczmarz,
    sketch_apply,
)
from stochlsq.problem import make_rng
from stochlsq.sketch import SketchSample, empirical_moment_deviation, enumerate_outcomes


def rotation(deg):
    t = math.radians(deg)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def test_beta_values():
    assert beta_of(block_kaczmarz(8, 2)) == 0.25
    assert beta_of(SparseRademacher(10, 3, 5)) == 1.5
    assert beta_of(SparseRandom(10, 4, 1 / 3)) == 4.0
    assert beta_of(SparseRandom(10, 4, 1 / 3, beta=2.5)) == 2.5
    assert beta_of(KaczmarzUniformColumns(10, 4)) == 0.4


def test_spec_validation():
    with pytest.raises(ValueError):
        SparseRandom(5, 2, 0.0)
    with pytest.raises(ValueError):
        SparseRandom(5, 2, 1.5)
    with pytest.raises(ValueError):
        SparseRademacher(5, 2, 6)
    with pytest.raises(ValueError):
        SparseRademacher(5, 2, 0)
    with pytest.raises(ValueError):
        KaczmarzUniformColumns(0, 1)
    with pytest.raises(ValueError):
        GeneralizedKaczmarz(4, ((0, 2), (3, 4)))
    with pytest.raises(ValueError):
        GeneralizedKaczmarz(4, ((0, 2),))


def test_kaczmarz_partition():
    spec = kaczmarz_partition(None, [2, 2, 2])
    assert spec.blocks == ((0, 2), (2, 4), (4, 6))
    with pytest.raises(ValueError):
        kaczmarz_partition(None, [3, 3], m=5)
    with pytest.raises(ValueError):
        kaczmarz_partition(np.array([[1.0, 0.1], [0.0, 1.0]]), [1, 1])
    spec = kaczmarz_partition(rotation(30), [1, 1])
    assert np.array_equal(spec.q, rotation(30))
    assert empirical_moment_deviation(spec, 2, make_rng(0), stratified=True) < 1e-15


def test_block_kaczmarz_uneven_last_block():
    spec = block_kaczmarz(10, 4)
    assert spec.blocks == ((0, 4), (4, 8), (8, 10))
    assert row_kaczmarz(3).blocks == ((0, 1), (1, 2), (2, 3))


@pytest.mark.parametrize("spec", [
    SparseRandom(30, 5, 0.3),
    SparseRandom(30, 5, 1.0),
    block_kaczmarz(30, 7),
    kaczmarz_partition(rotation(30), [1, 1]),
    KaczmarzUniformColumns(30, 5),
    SparseRademacher(30, 5, 4),
])
def test_draw_is_deterministic(spec):
    s1 = draw(spec, make_rng(9))
    s2 = draw(spec, make_rng(9))
    assert np.array_equal(s1.touched_rows, s2.touched_rows)
    assert s1.values.tobytes() == s2.values.tobytes()


def _check_sample_structure(sample):
    rows = sample.touched_rows
    assert np.all(np.diff(rows) > 0)
    assert rows.size == 0 or (rows[0] >= 0 and rows[-1] < sample.m)
    # every touched row is nonzero in some column
    assert np.all(np.any(sample.values != 0, axis=1))
    support = set()
    for col in sample.columns:
        idx = [r for r, _ in col]
        assert len(idx) == len(set(idx))
        support.update(idx)
    assert support == set(rows.tolist())


@given(m=st.integers(1, 40), ell=st.integers(1, 10), psi=st.floats(0.05, 1.0),
       seed=st.integers(0, 2**32))
def test_sparse_random_magnitudes(m, ell, psi, seed):
    spec = SparseRandom(m, ell, psi)
    s = draw(spec, make_rng(seed))
    _check_sample_structure(s)
    nz = s.values[s.values != 0]
    assert np.allclose(np.abs(nz), math.sqrt(ell / (ell * psi)), rtol=1e-15)


def test_sparse_random_psi_one_is_rademacher():
    s = draw(SparseRandom(20, 4, 1.0), make_rng(2))
    assert np.array_equal(np.abs(s.to_dense()), np.ones((20, 4)))


@given(m=st.integers(1, 40), ell=st.integers(1, 10), p=st.integers(1, 40),
       seed=st.integers(0, 2**32))
def test_sparse_rademacher_structure(m, ell, p, seed):
    p = min(p, m)
    s = draw(SparseRademacher(m, ell, p), make_rng(seed))
    _check_sample_structure(s)
    dense = s.to_dense()
    assert set(np.unique(dense)) <= {-1.0, 0.0, 1.0}
    assert np.all(np.count_nonzero(dense, axis=0) == p)
    assert s.touched_rows.size <= min(m, ell * p)


def test_sparse_rademacher_p_equals_m_dense():
    s = draw(SparseRademacher(12, 3, 12), make_rng(0))
    assert np.array_equal(np.abs(s.to_dense()), np.ones((12, 3)))


@given(m=st.integers(1, 40), ell=st.integers(1, 40), seed=st.integers(0, 2**32))
def test_kaczmarz_families_orthonormal_columns(m, ell, seed):
    ell = min(ell, m)
    for spec in (block_kaczmarz(m, ell), KaczmarzUniformColumns(m, ell)):
        s = draw(spec, make_rng(seed))
        _check_sample_structure(s)
        w = s.to_dense()
        assert np.array_equal(w.T @ w, np.eye(s.ell))
        assert set(np.unique(w)) <= {0.0, 1.0}
        assert s.touched_rows.size <= ell


def test_row_kaczmarz_single_basis_column():
    s = draw(row_kaczmarz(5), make_rng(1))
    w = s.to_dense()
    assert w.shape == (5, 1)
    assert np.count_nonzero(w) == 1 and w.sum() == 1.0


def test_q_block_values_are_q_entries():
    q = rotation(30)
    spec = kaczmarz_partition(q, [1, 1])
    for s in enumerate_outcomes(spec):
        col = s.to_dense()[:, 0]
        assert any(np.array_equal(col, q[:, j]) for j in range(2))


def test_sketch_apply_examples(rng):
    a = rng.standard_normal((8, 3))
    b = rng.standard_normal((8, 2))
    spec = kaczmarz_partition(None, [3, 3, 2])
    block = spec.block_samples[1]
    wa, wb, touched = sketch_apply(block, a, b)
    assert np.array_equal(wa, a[3:6]) and np.array_equal(wb, b[3:6]) and touched == 3

    empty = SketchSample(8, 2, np.empty(0, np.int64), np.zeros((0, 2)))
    wa, wb, touched = sketch_apply(empty, a, b)
    assert touched == 0 and not wa.any() and wa.shape == (2, 3)

    s = draw(SparseRandom(4, 1, 1.0, beta=1.0), make_rng(0))
    wa, _, touched = sketch_apply(s, np.eye(4), np.zeros((4, 1)))
    assert touched == 4 and np.array_equal(wa[0], s.to_dense()[:, 0])

    with pytest.raises(DimensionError):
        sketch_apply(block, a[:5], b)


@given(seed=st.integers(0, 2**32))
def test_sketch_apply_matches_dense_product(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((25, 4))
    b = rng.standard_normal((25, 2))
    for spec in (SparseRandom(25, 3, 0.4), SparseRademacher(25, 3, 5), KaczmarzUniformColumns(25, 3)):
        s = draw(spec, make_rng(seed))
        w = s.to_dense()
        wa, wb, touched = sketch_apply(s, a, b)
        assert np.allclose(wa, w.T @ a, rtol=1e-14, atol=1e-14)
        assert np.allclose(wb, w.T @ b, rtol=1e-14, atol=1e-14)
        assert touched == np.count_nonzero(np.any(w != 0, axis=1))


@pytest.mark.parametrize("spec", [
    block_kaczmarz(12, 4),
    kaczmarz_partition(None, [1, 3, 2, 6]),
    KaczmarzUniformColumns(7, 3),
    kaczmarz_partition(np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))[0], [2, 4]),
])
def test_exhaustive_second_moment_exact(spec):
    outcomes = enumerate_outcomes(spec)
    acc = sum(s.to_dense() @ s.to_dense().T for s in outcomes)
    assert np.allclose(acc / (len(outcomes) * beta_of(spec)), np.eye(spec.m), atol=1e-12)


def test_stratified_deviation_exact_zero():
    spec = block_kaczmarz(12, 3)
    assert empirical_moment_deviation(spec, 8, make_rng(0), stratified=True) == 0.0
    with pytest.raises(ValueError):
        empirical_moment_deviation(SparseRandom(5, 2, 0.5), 10, make_rng(0), stratified=True)


def test_enumerate_outcomes_limits():
    assert enumerate_outcomes(SparseRademacher(5, 2, 2)) is None
    assert enumerate_outcomes(KaczmarzUniformColumns(40, 8)) is None
    assert len(enumerate_outcomes(KaczmarzUniformColumns(6, 2))) == 15


def test_single_sample_deviation_finite():
    dev = empirical_moment_deviation(SparseRandom(10, 2, 0.5), 1, make_rng(0))
    assert math.isfinite(dev) and dev > 0


@pytest.mark.parametrize("spec", [SparseRandom(20, 4, 0.25), SparseRademacher(20, 4, 3),
                                  KaczmarzUniformColumns(20, 4)])
def test_moment_deviation_shrinks_with_n(spec):
    # CLT: 40x more samples shrinks the deviation by about sqrt(40); require a factor 2
    wins = 0
    for seed in range(3):
        small = empirical_moment_deviation(spec, 2_500, make_rng(seed))
        large = empirical_moment_deviation(spec, 100_000, make_rng(100 + seed))
        wins += large <= 0.5 * small
    assert wins >= 2


def test_monte_carlo_deviation_clt_bound():
    spec = SparseRandom(40, 8, 0.2)
    n = 20_000
    dev = empirical_moment_deviation(spec, n, make_rng(1))
    # per-draw diagonal variance is (1 - psi) / (ell * psi); off-diagonal 1 / ell
    sd = math.sqrt(max((1 - 0.2) / (8 * 0.2), 1 / 8))
    assert dev < 5 * sd / math.sqrt(n)


@given(m=st.integers(2, 30), ell=st.integers(1, 6), p=st.integers(1, 30), seed=st.integers(0, 2**32))
def test_batch_sampler_structure(m, ell, p, seed):
    from stochlsq.sketch import _dense_batch

    p = min(p, m)
    ell_k = min(ell, m)
    dense = _dense_batch(SparseRademacher(m, ell, p), make_rng(seed), 7)
    assert dense.shape == (m, 7 * ell)
    assert np.all(np.count_nonzero(dense, axis=0) == p)
    assert set(np.unique(dense)) <= {-1.0, 0.0, 1.0}
    dense = _dense_batch(KaczmarzUniformColumns(m, ell_k), make_rng(seed), 5)
    for t in range(5):
        w = dense[:, t * ell_k:(t + 1) * ell_k]
        assert np.array_equal(w.T @ w, np.eye(ell_k))
    spec = SparseRandom(m, ell, 0.3)
    dense = _dense_batch(spec, make_rng(seed), 4)
    assert np.allclose(np.abs(dense[dense != 0]), spec.magnitude, rtol=1e-15)
