import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from truh.calibrate import (INFEASIBLE, AllDrawsInfeasible, BootstrapConfig, Corners,
                            Dirichlet, IndexOutOfRange, _ReplicateEngine, _draw_surrogates,
                            bootstrap_replicate, draw_p_value, redecide, sample_mixing,
                            step5_cutoff, surrogate_counts, truh_test)
from truh.cluster import kmeans
from truh.core import InsufficientBaseline, InvalidAlpha, InvalidTau, RngStream, label
from truh.nn import compute_distances, truh_statistic


# --- mixing proportions -----------------------------------------------------

def test_corner_draw():
    assert sample_mixing(Corners(), 3, 2, RngStream(0)).tolist() == [0.0, 1.0, 0.0]
    with pytest.raises(IndexOutOfRange):
        sample_mixing(Corners(), 3, 4, RngStream(0))


def test_flat_dirichlet_marginal_is_uniform():
    lam1 = [sample_mixing(Dirichlet(1.0), 2, 1, RngStream(1, [i]))[0] for i in range(10_000)]
    assert stats.kstest(lam1, "uniform").pvalue > 0.01


def test_sparse_dirichlet_concentrates_on_corners():
    lams = np.array([sample_mixing(Dirichlet(0.1), 2, 1, RngStream(2, [i]))
                     for i in range(10_000)])
    assert np.all(lams >= 0) and np.allclose(lams.sum(axis=1), 1.0)
    assert np.mean(lams.max(axis=1) > 0.95) > 0.5


def test_surrogate_counts():
    assert surrogate_counts([0.5, 0.5], 10).tolist() == [5, 5]
    assert surrogate_counts([0.3, 0.7], 10).tolist() == [3, 7]      # 10 * 0.3 = 3.0000000000000004
    assert surrogate_counts([1 / 3] * 3, 10).tolist() == [4, 4, 4]  # overshoot kept


# --- single replicate ---------------------------------------------------------

def test_replicate_single_class():
    cls = np.arange(10.0).reshape(-1, 1)
    t = bootstrap_replicate([cls], [1.0], 3, 1.0, RngStream(0))
    assert math.isfinite(t) and t >= 0


def test_replicate_infeasible():
    rng = np.random.default_rng(0)
    classes = [rng.normal(size=(5, 2)), rng.normal(size=(100, 2))]
    assert bootstrap_replicate(classes, [1.0, 0.0], 10, 1.0, RngStream(0)) is INFEASIBLE


def test_replicate_needs_residual_rows():
    with pytest.raises(InsufficientBaseline):
        bootstrap_replicate([np.arange(4.0).reshape(-1, 1)], [1.0], 3, 1.0, RngStream(0))


def test_surrogate_draw_counts():
    members = [np.arange(50), np.arange(50, 100)]
    sur = _draw_surrogates(members, surrogate_counts([0.5, 0.5], 10), RngStream(3))
    assert len(sur) == 10 and len(set(sur.tolist())) == 10
    assert np.sum(sur < 50) == 5 and np.sum(sur >= 50) == 5
    assert 100 - len(sur) == 90


@given(st.integers(0, 2 ** 32 - 1), st.floats(1.0, 2.0))
def test_replicate_engine_matches_direct_route(seed, tau):
    # the fast path inside truh_test must give the exact statistic of the
    # straightforward replicate built from class matrices
    rng = np.random.default_rng(seed)
    sizes = (40, 25, 35)
    U = np.vstack([rng.normal(size=(s, 3)) + 4 * a for a, s in enumerate(sizes)])
    members = np.split(np.arange(len(U)), np.cumsum(sizes)[:-1])
    lam = rng.dirichlet(np.ones(3))
    stream = RngStream(seed, [1])
    direct = bootstrap_replicate([U[mb] for mb in members], lam, 12, tau, stream)
    engine = _ReplicateEngine(U, 3)
    sur = _draw_surrogates(members, surrogate_counts(lam, 12), stream)
    if direct is INFEASIBLE:
        return
    assert engine.statistic(sur, tau) == direct


# --- step 5 and p-values -----------------------------------------------------

def step5_oracle(values, alpha):
    b2 = len(values)
    ok = [t for t in values if sum(r >= t for r in values) / b2 <= alpha]
    return min(ok) if ok else max(values)


def test_step5_distinct_values_leaves_exactly_floor_alpha_b2_above():
    for seed in range(20):
        nulls = np.random.default_rng(seed).exponential(size=200)
        c = step5_cutoff(nulls, 0.05)
        assert np.count_nonzero(nulls >= c) == 10
        assert c == np.sort(nulls)[-10]


@given(st.lists(st.integers(0, 6), min_size=20, max_size=60),
       st.sampled_from([0.05, 0.1, 0.2, 0.25]))
def test_step5_matches_definition_with_ties(values, alpha):
    vals = [float(v) for v in values]
    assert step5_cutoff(vals, alpha) == step5_oracle(vals, alpha)


def test_step5_all_tied():
    assert step5_cutoff([2.0] * 40, 0.05) == 2.0


def test_p_value():
    assert draw_p_value([1.0, 2.0, 3.0], 2.5) == 2 / 4
    assert draw_p_value([1.0, 2.0, 3.0], 9.0) == 1 / 4
    assert draw_p_value([1.0] * 99, 1.0) == 1.0


# --- configuration ------------------------------------------------------------

@pytest.mark.parametrize("kwargs,err", [
    (dict(alpha=0.0), InvalidAlpha), (dict(alpha=1.0), InvalidAlpha),
    (dict(tau_fc=0.99), InvalidTau), (dict(b2=19), ValueError),
    (dict(b1=0), ValueError), (dict(k_override=0), ValueError),
    (dict(mixing_mode="corners"), TypeError),
])
def test_config_validation(kwargs, err):
    with pytest.raises(err):
        BootstrapConfig(**kwargs)


def test_effective_b1():
    assert BootstrapConfig().effective_b1(4) == 4
    assert BootstrapConfig(mixing_mode=Dirichlet(0.1)).effective_b1(4) == 10
    assert BootstrapConfig(mixing_mode=Dirichlet(0.1), b1=3).effective_b1(4) == 3


# --- full test ------------------------------------------------------------------

def two_groups(seed, m=300, n=20, shift=0.0):
    g = np.random.default_rng(seed)
    U = np.vstack([g.normal(size=(m // 2, 2)), g.normal(size=(m - m // 2, 2)) + 6.0])
    V = g.normal(size=(n, 2)) + shift
    return U, V


def test_result_invariants():
    U, V = two_groups(0)
    res = truh_test(U, V, BootstrapConfig(seed=1, b2=100))
    assert res.k_hat == 2 and len(res.per_draw) == 2
    assert [dr.lam for dr in res.per_draw] == [[1.0, 0.0], [0.0, 1.0]]
    assert res.cutoff == max(dr.cutoff for dr in res.per_draw)
    assert res.p_value == max(dr.p_value for dr in res.per_draw)
    for dr in res.per_draw:
        assert len(dr.null_values) == 100
        assert dr.cutoff == step5_cutoff(dr.null_values, 0.05)
        assert dr.q025 <= dr.q50 <= dr.q975
    expected = truh_statistic(compute_distances(U, V), 2)
    assert res.statistic == expected
    assert res.reject == (res.statistic > res.cutoff)


def test_deterministic_and_thread_independent():
    U, V = two_groups(1, shift=3.0)
    runs = [truh_test(U, V, BootstrapConfig(seed=5, b2=60, threads=t)) for t in (1, 1, 4)]
    assert runs[0].to_dict() == runs[1].to_dict() == runs[2].to_dict()
    other = truh_test(U, V, BootstrapConfig(seed=6, b2=60))
    assert other.to_dict() != runs[0].to_dict()


def test_remodelled_cases_are_rejected():
    U, V = two_groups(2, shift=3.0)   # between the two groups
    res = truh_test(U, V, BootstrapConfig(seed=0))
    assert res.reject and res.p_value <= 0.05


def test_tau_on_observed_flag():
    U, V = two_groups(3)
    on = truh_test(U, V, BootstrapConfig(seed=0, b2=40, tau_fc=1.3))
    off = truh_test(U, V, BootstrapConfig(seed=0, b2=40, tau_fc=1.3, tau_on_observed=False))
    d = compute_distances(U, V)
    assert on.statistic == truh_statistic(d, 2, 1.3)
    assert off.statistic == truh_statistic(d, 2, 1.0)
    assert [dr.cutoff for dr in on.per_draw] == [dr.cutoff for dr in off.per_draw]


def test_redecide_matches_fresh_run():
    U, V = two_groups(4, shift=1.0)
    base = truh_test(U, V, BootstrapConfig(seed=2, b2=200, alpha=0.05))
    for alpha in (0.01, 0.1, 0.2):
        fresh = truh_test(U, V, BootstrapConfig(seed=2, b2=200, alpha=alpha))
        assert redecide(base, alpha).to_dict() == fresh.to_dict()


def test_supplied_clusters_are_used():
    U, V = two_groups(5)
    clusters = kmeans(U, 3, rng=RngStream(0))
    res = truh_test(U, V, BootstrapConfig(seed=0, b2=40), clusters=clusters)
    assert res.k_hat == 3 and len(res.per_draw) == 3


def test_dirichlet_mode_runs_b1_draws():
    U, V = two_groups(6)
    res = truh_test(U, V, BootstrapConfig(seed=0, b2=40, mixing_mode=Dirichlet(0.1), b1=4))
    assert len(res.per_draw) == 4
    for dr in res.per_draw:
        assert math.isclose(sum(dr.lam), 1.0) and min(dr.lam) >= 0


def test_small_class_corner_is_skipped():
    g = np.random.default_rng(7)
    U = np.vstack([g.normal(size=(200, 2)), g.normal(size=(8, 2)) + 20])
    V = g.normal(size=(15, 2))
    clusters = kmeans(U, 2, rng=RngStream(0))
    with pytest.warns(RuntimeWarning, match="skipping"):
        res = truh_test(U, V, BootstrapConfig(seed=0, b2=40), clusters=clusters)
    assert len(res.per_draw) == 1


def test_all_corners_infeasible():
    g = np.random.default_rng(8)
    U = np.vstack([g.normal(size=(10, 2)), g.normal(size=(10, 2)) + 20])
    clusters = kmeans(U, 2, rng=RngStream(0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(AllDrawsInfeasible):
            truh_test(U, g.normal(size=(12, 2)), BootstrapConfig(b2=40), clusters=clusters)


def test_baseline_must_exceed_cases():
    with pytest.raises(InsufficientBaseline):
        truh_test(np.zeros((5, 1)) + np.arange(5)[:, None], np.zeros((4, 1)))


def test_size_under_exact_null():
    # one Gaussian cloud of 100 points split into disjoint baseline and cases
    rejections = 0
    for s in range(100):
        X = RngStream(s, [label("cloud")]).normal((100, 2))
        res = truh_test(X[:80], X[80:], BootstrapConfig(seed=s, k_override=1))
        rejections += res.reject
    assert rejections / 100 <= 0.05 + 0.05
