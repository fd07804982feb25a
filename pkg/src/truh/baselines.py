"""Reference two-sample tests for the simple null ``F0 = G``.

* Friedman-Rafsky edge count on the Euclidean minimum spanning tree of
  the pooled sample, calibrated either by its normal limit or by label
  permutation.
* The energy-distance test, calibrated by permutation.

Neither test accounts for a mixture null; they are here for comparison.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import ndtri

from .core import (EmptyInput, InvalidAlpha, RngStream, as_matrix,
                   check_same_dimension)

__all__ = ["Mst", "BaselineMethod", "BaselineResult", "build_mst",
           "edgecount_statistic", "edgecount_cutoff", "edgecount_sigma2",
           "edgecount_test_asymptotic", "edgecount_test_permutation",
           "energy_statistic", "energy_test", "pairwise_distances"]


class BaselineMethod(str, enum.Enum):
    EDGECOUNT_ASYMPTOTIC = "edgecount_asymptotic"
    EDGECOUNT_PERMUTATION = "edgecount_permutation"
    ENERGY_PERMUTATION = "energy"


@dataclass
class Mst:
    n_vertices: int
    edges: list  # (u, v, weight) with u < v

    @property
    def total_weight(self) -> float:
        return math.fsum(w for _, _, w in self.edges)

    def endpoints(self):
        if not self.edges:
            return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
        arr = np.array([(u, v) for u, v, _ in self.edges], dtype=np.intp)
        return arr[:, 0], arr[:, 1]

    def degrees(self):
        u, v = self.endpoints()
        return np.bincount(np.concatenate([u, v]), minlength=self.n_vertices)


@dataclass
class BaselineResult:
    method: BaselineMethod
    statistic: float
    p_value: float
    reject: bool
    alpha: float
    n_permutations: Optional[int] = None
    cutoff: Optional[float] = None
    permuted: Optional[np.ndarray] = None

    def at_alpha(self, alpha: float) -> bool:
        """Decision at another level without recomputing anything."""
        if self.method is BaselineMethod.EDGECOUNT_ASYMPTOTIC:
            raise ValueError("asymptotic decisions depend on the cutoff; recompute it")
        return self.p_value <= alpha


def pairwise_distances(X):
    # differences are formed explicitly, so equal rows are exactly 0 apart
    return squareform(pdist(X))


def build_mst(points, boxsize: float = None) -> Mst:
    """Exact Euclidean minimum spanning tree by dense Prim, O(N^2).

    Equal keys go to the lowest vertex index, which makes the tree
    deterministic for degenerate inputs.  With ``boxsize`` distances are
    taken on the flat torus of that side length.
    """
    X = as_matrix(points).data
    n = X.shape[0]
    if n < 2:
        raise EmptyInput("a spanning tree needs at least two points")
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.intp)
    best[0] = 0.0
    edges = []
    current = 0
    in_tree[0] = True
    for _ in range(n - 1):
        diff = X - X[current]
        if boxsize is not None:
            diff = np.abs(diff)
            diff = np.minimum(diff, boxsize - diff)
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        closer = (dist < best) & ~in_tree
        best[closer] = dist[closer]
        parent[closer] = current
        masked = np.where(in_tree, np.inf, best)
        current = int(np.argmin(masked))
        in_tree[current] = True
        p = int(parent[current])
        edges.append((min(p, current), max(p, current), float(best[current])))
    return Mst(n, edges)


def _pooled(baseline, cases):
    U = as_matrix(baseline)
    V = as_matrix(cases)
    check_same_dimension(U, V)
    return np.vstack([U.data, V.data]), U.n_rows, V.n_rows


def _cross_edges(u, v, is_case):
    return int(np.count_nonzero(is_case[u] != is_case[v]))


def edgecount_statistic(baseline, cases) -> int:
    """Number of pooled-MST edges joining a baseline row to a case row."""
    X, m, n = _pooled(baseline, cases)
    if m + n < 2:
        raise EmptyInput("need at least two pooled points")
    u, v = build_mst(X).endpoints()
    labels = np.r_[np.zeros(m, dtype=bool), np.ones(n, dtype=bool)]
    return _cross_edges(u, v, labels)


def edgecount_sigma2(rho: float, delta_d: float) -> float:
    return rho * (4.0 * rho + (1.0 - rho) ** 2 * delta_d) / (1.0 + rho) ** 4


def edgecount_cutoff(m: int, n: int, alpha: float, delta_d: float, rho: float = None) -> float:
    """Lower rejection threshold ``2mn/(m+n) - z_{1-alpha} sigma_d sqrt(m+n)``."""
    if not 0.0 < alpha < 0.5:
        raise InvalidAlpha(f"alpha must lie in (0, 0.5), got {alpha}")
    if rho is None:
        rho = n / m
    sigma = math.sqrt(edgecount_sigma2(rho, delta_d))
    return 2.0 * m * n / (m + n) - float(ndtri(1.0 - alpha)) * sigma * math.sqrt(m + n)


def edgecount_test_asymptotic(baseline, cases, alpha: float = 0.05,
                              delta_d: float = None, rho: float = None) -> BaselineResult:
    """Reject when the cross count falls below the normal-limit cutoff.

    ``delta_d`` (variance of the MST degree of a Poisson point) defaults
    to the tabulated value for the data dimension.
    """
    if not 0.0 < alpha < 0.5:
        raise InvalidAlpha(f"alpha must lie in (0, 0.5), got {alpha}")
    X, m, n = _pooled(baseline, cases)
    if delta_d is None:
        from .constants import delta_mst_table
        delta_d = delta_mst_table(X.shape[1])
    R = edgecount_statistic(X[:m], X[m:])
    cutoff = edgecount_cutoff(m, n, alpha, delta_d, rho)
    z = (R - 2.0 * m * n / (m + n)) / (
        math.sqrt(edgecount_sigma2(n / m if rho is None else rho, delta_d)) * math.sqrt(m + n))
    p = float(0.5 * math.erfc(-z / math.sqrt(2.0)))
    return BaselineResult(BaselineMethod.EDGECOUNT_ASYMPTOTIC, float(R), p,
                          bool(R < cutoff), alpha, None, cutoff)


def edgecount_test_permutation(baseline, cases, alpha: float = 0.05,
                               n_perm: int = 999, rng: RngStream = None) -> BaselineResult:
    """Edge count calibrated by shuffling labels over one fixed pooled MST.

    The p-value is ``(1 + #{permuted R <= observed R}) / (n_perm + 1)``.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")
    if n_perm < 99:
        raise ValueError("use at least 99 permutations")
    rng = rng or RngStream(0)
    X, m, n = _pooled(baseline, cases)
    u, v = build_mst(X).endpoints()
    labels = np.r_[np.zeros(m, dtype=bool), np.ones(n, dtype=bool)]
    observed = _cross_edges(u, v, labels)
    perm = np.empty(n_perm)
    for b in range(n_perm):
        shuffled = labels[rng.child(b).permutation(m + n)]
        perm[b] = _cross_edges(u, v, shuffled)
    p = (1.0 + np.count_nonzero(perm <= observed)) / (n_perm + 1.0)
    return BaselineResult(BaselineMethod.EDGECOUNT_PERMUTATION, float(observed),
                          float(p), bool(p <= alpha), alpha, n_perm, permuted=perm)


def _energy_from_matrix(Dm, is_case):
    n = int(is_case.sum())
    m = len(is_case) - n
    w = is_case.astype(float)
    Dw = Dm @ w
    s_vv = float(w @ Dw)
    s_uv = float(Dw.sum() - s_vv)
    s_uu = float(Dm.sum() - 2.0 * s_uv - s_vv)
    return (n * m / (n + m)) * (2.0 * s_uv / (n * m) - s_vv / n ** 2 - s_uu / m ** 2)


def energy_statistic(baseline, cases) -> float:
    """``nm/(n+m) * (2 E|V-U| - E|V-V'| - E|U-U'|)`` with V-statistic means."""
    X, m, n = _pooled(baseline, cases)
    return _energy_from_matrix(pairwise_distances(X), np.r_[np.zeros(m, bool), np.ones(n, bool)])


def energy_test(baseline, cases, alpha: float = 0.05, n_perm: int = 999,
                rng: RngStream = None) -> BaselineResult:
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")
    if n_perm < 99:
        raise ValueError("use at least 99 permutations")
    rng = rng or RngStream(0)
    X, m, n = _pooled(baseline, cases)
    Dm = pairwise_distances(X)
    labels = np.r_[np.zeros(m, dtype=bool), np.ones(n, dtype=bool)]
    observed = _energy_from_matrix(Dm, labels)

    total = float(Dm.sum())
    W = np.empty((m + n, n_perm))
    for b in range(n_perm):
        W[:, b] = labels[rng.child(b).permutation(m + n)]
    DW = Dm @ W
    s_vv = np.einsum("ib,ib->b", W, DW)
    s_uv = DW.sum(axis=0) - s_vv
    s_uu = total - 2.0 * s_uv - s_vv
    perm = (n * m / (n + m)) * (2.0 * s_uv / (n * m) - s_vv / n ** 2 - s_uu / m ** 2)
    # permuted copies of the observed labelling must count as ties
    tol = 1e-9 * max(1.0, abs(observed))
    p = (1.0 + np.count_nonzero(perm >= observed - tol)) / (n_perm + 1.0)
    return BaselineResult(BaselineMethod.ENERGY_PERMUTATION, float(observed), float(p),
                          bool(p <= alpha), alpha, n_perm, permuted=perm)
