"""Bootstrap calibration of the TRUH statistic.

The baseline is clustered once into ``K_hat`` classes.  Each outer draw
picks mixing proportions ``lam`` on the ``K_hat``-simplex; each inner
replicate then takes ``ceil(n * lam_a)`` rows of class ``a`` (without
replacement) as surrogate cases and keeps the rest as the baseline, and
evaluates the statistic on that split.  The per-draw cutoff is the
smallest null value whose upper-tail frequency is at most ``alpha``; the
reported cutoff is the largest per-draw cutoff.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .cluster import ClusteringEstimate, DEFAULT_K_MAX, kmeans, prediction_strength
from .core import (DrawSummary, InsufficientBaseline, InvalidAlpha, InvalidTau,
                   RngStream, TruhError, TruhResult, as_matrix,
                   check_same_dimension, label, parallel_map)
from .nn import NnIndex, compute_distances, split_distances, truh_statistic

__all__ = ["Corners", "Dirichlet", "BootstrapConfig", "Infeasible", "INFEASIBLE",
           "AllDrawsInfeasible", "IndexOutOfRange", "sample_mixing",
           "surrogate_counts", "bootstrap_replicate", "step5_cutoff",
           "draw_p_value", "estimate_classes", "truh_test", "redecide", "null_diagnostics",
           "DEFAULT_B2", "DEFAULT_DIRICHLET_B1"]

DEFAULT_B2 = 200
DEFAULT_DIRICHLET_B1 = 10
MAX_DIRICHLET_RETRIES = 100
# neighbour lists kept per baseline row for the replicate fast path
NEIGHBOUR_LIST_LEN = 32


class AllDrawsInfeasible(TruhError, ValueError):
    pass


class IndexOutOfRange(TruhError, IndexError):
    pass


@dataclass(frozen=True)
class Corners:
    """Unit mass on one class per draw; ``B1 = K_hat``."""

    def __str__(self):
        return "corners"


@dataclass(frozen=True)
class Dirichlet:
    beta: float = 0.1

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("Dirichlet beta must be positive")

    def __str__(self):
        return f"dirichlet({self.beta:g})"


class Infeasible:
    """Marker for a draw that needs more rows than a class holds."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"


INFEASIBLE = Infeasible()


@dataclass
class BootstrapConfig:
    alpha: float = 0.05
    tau_fc: float = 1.0
    b1: Optional[int] = None       # Dirichlet draws; ignored in corners mode
    b2: int = DEFAULT_B2
    mixing_mode: Union[Corners, Dirichlet] = field(default_factory=Corners)
    k_override: Optional[int] = None
    seed: int = 0
    tau_on_observed: bool = True
    threads: int = 1
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidAlpha(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.tau_fc >= 1.0:
            raise InvalidTau(f"tau_fc must be >= 1, got {self.tau_fc}")
        if self.b2 < math.ceil(1.0 / self.alpha - 1e-9):
            raise ValueError(f"b2={self.b2} is too small for alpha={self.alpha}; "
                             f"need at least {math.ceil(1.0 / self.alpha - 1e-9)}")
        if self.b1 is not None and self.b1 < 1:
            raise ValueError("b1 must be positive")
        if self.k_override is not None and self.k_override < 1:
            raise ValueError("k_override must be positive")
        if not isinstance(self.mixing_mode, (Corners, Dirichlet)):
            raise TypeError("mixing_mode must be Corners() or Dirichlet(beta)")

    def effective_b1(self, k_hat: int) -> int:
        if isinstance(self.mixing_mode, Corners):
            return k_hat
        return self.b1 if self.b1 is not None else DEFAULT_DIRICHLET_B1


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def sample_mixing(mode, k_hat: int, b1_index: int, rng: RngStream) -> np.ndarray:
    """Mixing proportions for outer draw ``b1_index`` (1-based in corners mode)."""
    if k_hat < 1:
        raise ValueError("k_hat must be positive")
    if isinstance(mode, Corners):
        if not 1 <= b1_index <= k_hat:
            raise IndexOutOfRange(f"corner {b1_index} outside 1..{k_hat}")
        lam = np.zeros(k_hat)
        lam[b1_index - 1] = 1.0
        return lam
    if isinstance(mode, Dirichlet):
        while True:
            g = rng.gamma(mode.beta, k_hat)
            total = g.sum()
            # tiny shapes can underflow every coordinate to zero
            if total > 0 and np.isfinite(total):
                return g / total
    raise TypeError(f"unknown mixing mode {mode!r}")


def surrogate_counts(lam, n: int) -> np.ndarray:
    """``ceil(n * lam_a)`` per class, guarded against round-off just above an integer."""
    scaled = n * np.asarray(lam, dtype=float)
    return np.ceil(scaled - 1e-9 * np.maximum(1.0, scaled)).astype(np.intp).clip(min=0)


def _draw_surrogates(members, counts, rng):
    picks = []
    for a, (rows, c) in enumerate(zip(members, counts)):
        if c:
            picks.append(rows[rng.child(a).choice_without_replacement(len(rows), int(c))])
    return np.concatenate(picks) if picks else np.empty(0, dtype=np.intp)


def bootstrap_replicate(classes, lam, n: int, tau_fc: float, rng: RngStream):
    """One null replicate from explicit class matrices.

    Returns the statistic on (residual baseline, surrogate cases), or
    :data:`INFEASIBLE` when some ``ceil(n * lam_a)`` exceeds its class size.
    """
    mats = [as_matrix(c) for c in classes]
    if len(mats) != len(lam):
        raise ValueError("one weight per class is required")
    if not math.isclose(float(np.sum(lam)), 1.0, abs_tol=1e-9):
        raise ValueError("mixing proportions must sum to one")
    sizes = np.array([c.n_rows for c in mats])
    counts = surrogate_counts(lam, n)
    if np.any(counts > sizes):
        return INFEASIBLE
    if sizes.sum() - counts.sum() < 2:
        raise InsufficientBaseline("fewer than two residual baseline rows")
    pooled = np.vstack([c.data for c in mats])
    offsets = np.r_[0, np.cumsum(sizes)]
    members = [np.arange(offsets[a], offsets[a + 1]) for a in range(len(mats))]
    sur = _draw_surrogates(members, counts, rng)
    residual = np.ones(len(pooled), dtype=bool)
    residual[sur] = False
    dist = compute_distances(pooled[residual], pooled[sur])
    return truh_statistic(dist, pooled.shape[1], tau_fc)


def step5_cutoff(null_values, alpha: float) -> float:
    """``min{T_b : #{T_r >= T_b} / B2 <= alpha}``.

    When every null value is tied at the top the set is empty; the largest
    null value is returned then.
    """
    t = np.sort(np.asarray(null_values, dtype=float))
    b2 = len(t)
    at_least = b2 - np.searchsorted(t, t, side="left")
    ok = at_least <= alpha * b2 * (1 + 1e-12)
    return float(t[ok].min()) if ok.any() else float(t[-1])


def draw_p_value(null_values, statistic: float) -> float:
    null_values = np.asarray(null_values)
    return float((1 + np.count_nonzero(null_values >= statistic)) / (len(null_values) + 1))


def _summarise(lam, nulls, statistic, alpha):
    q025, q50, q975 = np.quantile(nulls, [0.025, 0.5, 0.975])
    return DrawSummary([float(x) for x in lam], float(q025), float(q50), float(q975),
                       step5_cutoff(nulls, alpha), draw_p_value(nulls, statistic),
                       np.asarray(nulls, dtype=float))


# ---------------------------------------------------------------------------
# the test
# ---------------------------------------------------------------------------

class _ReplicateEngine:
    """Replicates on index subsets of one baseline, sharing neighbour lists."""

    def __init__(self, U, d):
        self.U = U
        self.d = d
        m = U.shape[0]
        self.index = NnIndex(U)
        k = min(NEIGHBOUR_LIST_LEN, m - 1)
        self.knn_dist, self.knn_idx = self.index.knn(U, k, exclude=np.arange(m))

    def statistic(self, surrogate, tau_fc):
        residual = np.ones(self.U.shape[0], dtype=bool)
        residual[surrogate] = False
        dist = split_distances(self.U, self.knn_idx, self.knn_dist, surrogate, residual)
        return truh_statistic(dist, self.d, tau_fc)


def estimate_classes(U, config, rng):
    if config.k_override is not None:
        return kmeans(U, config.k_override, rng=rng.child(label("kmeans")))
    k_max = max(1, min(config.k_max, U.shape[0] // 2))
    return prediction_strength(U, k_max=k_max, rng=rng.child(label("strength")))


def _draw_lambdas(config, clusters, n, rng):
    """Feasible mixing proportions for every outer draw, skipping dead ones."""
    k_hat = clusters.k_hat
    sizes = clusters.class_sizes
    m = int(sizes.sum())
    mode = config.mixing_mode

    def feasible(lam):
        c = surrogate_counts(lam, n)
        return bool(np.all(c <= sizes)) and m - int(c.sum()) >= 2

    lams = []
    for b1 in range(1, config.effective_b1(k_hat) + 1):
        if isinstance(mode, Corners):
            lam = sample_mixing(mode, k_hat, b1, rng)
            if feasible(lam):
                lams.append(lam)
            else:
                warnings.warn(f"class {b1} has {sizes[b1 - 1]} rows, fewer than "
                              f"n={n}; skipping its corner", RuntimeWarning)
            continue
        for attempt in range(MAX_DIRICHLET_RETRIES):
            lam = sample_mixing(mode, k_hat, b1, rng.child(label("mixing"), b1, attempt))
            if feasible(lam):
                lams.append(lam)
                break
        else:
            warnings.warn(f"draw {b1}: no feasible proportions in "
                          f"{MAX_DIRICHLET_RETRIES} attempts", RuntimeWarning)
    if not lams:
        raise AllDrawsInfeasible("every mixing draw needs more rows than its classes hold")
    return lams


def truh_test(baseline, cases, config: BootstrapConfig = None,
              clusters: ClusteringEstimate = None) -> TruhResult:
    """Bootstrap-calibrated TRUH test of ``cases`` against the mixture null.

    ``clusters`` may carry a precomputed partition of the baseline; by
    default it is estimated by prediction strength (or k-means with
    ``config.k_override`` classes).
    """
    config = config or BootstrapConfig()
    Um, Vm = as_matrix(baseline), as_matrix(cases)
    check_same_dimension(Um, Vm)
    U, V = Um.data, Vm.data
    m, n, d = U.shape[0], V.shape[0], U.shape[1]
    if n < 1:
        raise InsufficientBaseline("no case rows")
    if m < n + 2:
        raise InsufficientBaseline(f"baseline has {m} rows; need at least n + 2 = {n + 2}")
    root = RngStream(config.seed)

    if clusters is None:
        clusters = estimate_classes(U, config, root.child(label("cluster")))
    members = [clusters.members(a) for a in range(clusters.k_hat)]
    engine = _ReplicateEngine(U, d)

    tau_obs = config.tau_fc if config.tau_on_observed else 1.0
    observed = truh_statistic(compute_distances(Um, Vm, index=engine.index), d, tau_obs)

    lams = _draw_lambdas(config, clusters, n, root)
    per_draw = []
    for b1, lam in enumerate(lams, start=1):
        counts = surrogate_counts(lam, n)

        def replicate(b2, lam_counts=counts, b1=b1):
            stream = root.child(label("replicate"), b1, b2)
            sur = _draw_surrogates(members, lam_counts, stream)
            return engine.statistic(sur, config.tau_fc)

        nulls = np.array(parallel_map(replicate, range(config.b2), config.threads))
        per_draw.append(_summarise(lam, nulls, observed, config.alpha))

    cutoff = max(dr.cutoff for dr in per_draw)
    p_value = max(dr.p_value for dr in per_draw)
    return TruhResult(statistic=float(observed), cutoff=float(cutoff),
                      p_value=float(p_value), reject=bool(observed > cutoff),
                      alpha=config.alpha, tau_fc=config.tau_fc, k_hat=clusters.k_hat,
                      per_draw=per_draw, m=m, n=n, d=d, seed=int(config.seed))


def redecide(result: TruhResult, alpha: float) -> TruhResult:
    """The same test at another level, reusing the stored null replicates."""
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")
    draws = []
    for dr in result.per_draw:
        if dr.null_values is None:
            raise ValueError("result carries no null replicates (loaded from JSON?)")
        draws.append(replace(dr, cutoff=step5_cutoff(dr.null_values, alpha)))
    cutoff = max(dr.cutoff for dr in draws)
    return replace(result, alpha=alpha, cutoff=cutoff, per_draw=draws,
                   reject=bool(result.statistic > cutoff))


def null_diagnostics(baseline, cases, config: BootstrapConfig = None):
    """Per-draw ``(lambda, q025, q50, q975, null_values)`` rows plus the observed statistic."""
    result = truh_test(baseline, cases, config)
    rows = [{"lambda": dr.lam, "q025": dr.q025, "q50": dr.q50, "q975": dr.q975,
             "null_values": dr.null_values} for dr in result.per_draw]
    return result.statistic, rows
