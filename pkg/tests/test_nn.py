import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from truh.core import DimensionMismatch, InsufficientBaseline, InvalidTau, RngStream
from truh.nn import (EmptyDistances, NnDistances, NnIndex, build_index, compute_distances,
                     split_distances, truh_statistic)

import oracles


def _nd(D, C):
    return NnDistances(np.array(D, float), np.array(C, float), np.zeros(len(D), int))


# --- worked examples ----------------------------------------------------------

def test_query_examples():
    assert build_index([[0.0], [1.0], [3.0]]).query([0.9]) == 1
    assert build_index([[0.0], [2.0]]).query([1.0]) == 0


def test_query_excluding():
    idx = build_index([[0.0], [1.0], [3.0]])
    assert idx.query_excluding([1.0], 1) == 0
    assert idx.query_excluding([0.0], 0) == 1


def test_distances_examples():
    r = compute_distances([[0.0], [1.0], [3.0]], [[0.9]])
    assert r.nn_indices.tolist() == [1]
    assert r.d_values[0] == pytest.approx(0.1, abs=1e-15)
    assert r.c_values.tolist() == [1.0]
    r = compute_distances([[0.0], [1.0]], [[2.0]])
    assert r.d_values.tolist() == [1.0] and r.c_values.tolist() == [1.0]


def test_statistic_examples():
    assert truh_statistic(_nd([0.1], [1.0]), 1) == pytest.approx(0.9, abs=1e-15)
    assert truh_statistic(_nd([1.0], [1.0]), 1) == 0.0
    assert truh_statistic(_nd([1.0], [1.0]), 1, 1.1) == pytest.approx(0.1, abs=1e-15)


def test_statistic_scaling_with_n_and_d():
    # n**(1/d) with n = 8, d = 3 is 2
    assert truh_statistic(_nd([1.0] * 8, [0.5] * 8), 3) == pytest.approx(1.0, rel=1e-15)


def test_duplicate_rows_excluded_by_index():
    r = compute_distances([[1.0], [1.0], [5.0]], [[1.2]])
    assert r.nn_indices.tolist() == [0]
    assert r.c_values.tolist() == [0.0]


def test_errors():
    with pytest.raises(InsufficientBaseline):
        compute_distances([[0.0]], [[1.0]])
    with pytest.raises(DimensionMismatch):
        compute_distances(np.zeros((3, 2)), np.zeros((1, 3)))
    with pytest.raises(InvalidTau):
        truh_statistic(_nd([1.0], [1.0]), 1, 0.9)
    with pytest.raises(EmptyDistances):
        truh_statistic(_nd([], []), 1)


# --- brute-force oracle -----------------------------------------------------

@pytest.mark.parametrize("method", ["tree", "brute"])
def test_index_matches_brute_force(method):
    rng = np.random.default_rng(1)
    P, Q = rng.normal(size=(200, 5)), rng.normal(size=(50, 5))
    index = NnIndex(P, method=method)
    for q in Q:
        assert index.query(q) == oracles.brute_nn(P, q)[0]


def test_distances_match_double_loop():
    rng = np.random.default_rng(2)
    U, V = rng.normal(size=(100, 3)), rng.normal(size=(100, 3))
    r = compute_distances(U, V)
    t, D, C = oracles.brute_truh(U, V)
    expected_nn = [oracles.brute_nn(U, v)[0] for v in V]
    assert r.nn_indices.tolist() == expected_nn
    # the oracle sums squares with fsum, so allow last-bit differences
    assert np.allclose(r.d_values, D, rtol=1e-15, atol=0)
    assert np.allclose(r.c_values, C, rtol=1e-15, atol=0)
    assert truh_statistic(r, 3) == pytest.approx(t, rel=1e-13)


grid_cases = st.tuples(st.integers(2, 300), st.integers(1, 30), st.integers(1, 10),
                       st.integers(0, 2 ** 32 - 1))


@given(grid_cases)
def test_exact_on_tied_grids(case):
    m, n, d, seed = case
    rng = np.random.default_rng(seed)
    U = rng.integers(0, 3, size=(m, d)).astype(float)
    V = rng.integers(0, 3, size=(n, d)).astype(float)
    for method in ("tree", "brute"):
        r = compute_distances(U, V, index=NnIndex(U, method=method))
        for i, v in enumerate(V):
            j, dj = oracles.brute_nn(U, v)
            _, cj = oracles.brute_nn(U, U[j], forbidden=j)
            assert (r.nn_indices[i], r.d_values[i], r.c_values[i]) == (j, dj, cj)


def test_random_tie_breaking_only_picks_minimisers():
    U = np.array([[0.0], [2.0], [4.0]])
    seen = set()
    for s in range(40):
        r = compute_distances(U, [[1.0]], tie_break="random", rng=RngStream(s))
        seen.add(int(r.nn_indices[0]))
        assert r.d_values[0] == 1.0 and r.c_values[0] == 2.0
    assert seen == {0, 1}


# --- invariances --------------------------------------------------------------

@given(st.integers(0, 2 ** 32 - 1), st.integers(-8, 8), st.floats(0.01, 100.0))
def test_translation_and_scale(seed, shift_exp, scale):
    rng = np.random.default_rng(seed)
    U, V = rng.normal(size=(60, 3)), rng.normal(size=(12, 3))
    base = compute_distances(U, V)
    t = truh_statistic(base, 3)
    # power-of-two shifts are exact in binary floating point
    shift = np.array([2.0 ** shift_exp, -(2.0 ** shift_exp), 0.0])
    moved = compute_distances(U + shift, V + shift)
    assert np.allclose(moved.d_values, base.d_values, rtol=0, atol=1e-12 * 2.0 ** shift_exp)
    if abs(shift_exp) <= 2:
        assert truh_statistic(moved, 3) == pytest.approx(t, abs=1e-12)
    scaled = compute_distances(scale * U, scale * V)
    assert truh_statistic(scaled, 3) == pytest.approx(scale * t, rel=1e-12, abs=1e-300)


def test_exact_invariance_with_dyadic_data():
    rng = np.random.default_rng(3)
    U = rng.integers(-64, 64, size=(80, 2)) / 8.0
    V = rng.integers(-64, 64, size=(15, 2)) / 8.0
    base = compute_distances(U, V)
    shifted = compute_distances(U + 16.0, V + 16.0)
    scaled = compute_distances(4.0 * U, 4.0 * V)
    assert np.array_equal(shifted.d_values, base.d_values)
    assert np.array_equal(shifted.c_values, base.c_values)
    assert truh_statistic(shifted, 2) == truh_statistic(base, 2)
    assert np.array_equal(scaled.d_values, 4.0 * base.d_values)
    assert truh_statistic(scaled, 2) == 4.0 * truh_statistic(base, 2)


@given(st.integers(0, 2 ** 32 - 1))
def test_row_permutations(seed):
    rng = np.random.default_rng(seed)
    U, V = rng.normal(size=(50, 2)), rng.normal(size=(10, 2))
    base = compute_distances(U, V)
    pv = rng.permutation(10)
    r = compute_distances(U, V[pv])
    assert np.array_equal(r.d_values, base.d_values[pv])
    assert np.array_equal(r.c_values, base.c_values[pv])
    pu = rng.permutation(50)
    assert truh_statistic(compute_distances(U[pu], V), 2) == pytest.approx(
        truh_statistic(base, 2), rel=1e-14)
    assert truh_statistic(base, 2) >= 0.0


# --- replicate fast path ----------------------------------------------------

@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_split_distances_match_direct_route(seed, d):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(120, d))
    k = 8                                   # short lists force the fallback scan too
    index = NnIndex(X)
    knn_dist, knn_idx = index.knn(X, k, exclude=np.arange(120))
    surrogate = rng.choice(120, size=int(rng.integers(1, 60)), replace=False)
    mask = np.ones(120, bool)
    mask[surrogate] = False
    fast = split_distances(X, knn_idx, knn_dist, surrogate, mask)
    residual = np.flatnonzero(mask)
    direct = compute_distances(X[residual], X[surrogate])
    assert np.array_equal(fast.d_values, direct.d_values)
    assert np.array_equal(fast.c_values, direct.c_values)
    assert np.array_equal(fast.nn_indices, residual[direct.nn_indices])


def test_torus_metric_wraps():
    index = NnIndex([[0.05], [0.5]], boxsize=1.0)
    dist, idx = index.knn(np.array([[0.97]]), 1)
    assert idx[0, 0] == 0
    assert math.isclose(dist[0, 0], 0.08, rel_tol=1e-12)
