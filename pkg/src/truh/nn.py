"""Exact nearest-neighbour machinery and the TRUH statistic.

For every case point ``V_i`` we need ``D_i``, its distance to the closest
baseline row, and ``C_i``, the distance from that baseline row to its own
closest *other* baseline row.  The statistic is
``n**(1/d) * |tau * mean(D) - mean(C)|``.

All neighbour searches here are exact.  Candidates come from either a
k-d tree (low dimension) or a BLAS distance screen (high dimension); the
final ranking always recomputes ``sqrt(sum((x - p)**2))`` directly and
orders by ``(distance, row index)``, so ties go to the lowest row index
and both search paths agree bit for bit with a plain scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import (EmptyInput, InsufficientBaseline, InvalidTau, SampleMatrix,
                   TruhError, as_matrix, check_same_dimension)

__all__ = ["NnIndex", "NnDistances", "EmptyDistances", "build_index",
           "compute_distances", "truh_statistic", "split_distances",
           "exact_distances", "BRUTE_FORCE_MIN_DIM"]

# trees stop paying off beyond this dimension
BRUTE_FORCE_MIN_DIM = 16

_CHUNK_ENTRIES = 1 << 22
_EXTRA_CANDIDATES = 4
_SCREEN_RTOL = 1e-11


class EmptyDistances(TruhError, ValueError):
    pass


def exact_distances(queries, points, idx, boxsize=None):
    """Euclidean distances between ``queries[i]`` and ``points[idx[i, j]]``."""
    diff = queries[:, None, :] - points[idx]
    if boxsize is not None:
        diff = np.abs(diff)
        diff = np.minimum(diff, boxsize - diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _rank(dist, idx, k):
    order = np.lexsort((idx, dist), axis=-1)[:, :k]
    return (np.take_along_axis(dist, order, axis=1),
            np.take_along_axis(idx, order, axis=1))


class NnIndex:
    """Exact k-nearest-neighbour index over the rows of a matrix.

    Parameters
    ----------
    points : SampleMatrix or array_like
    method : {"auto", "tree", "brute"}
        ``auto`` picks the tree below :data:`BRUTE_FORCE_MIN_DIM` dimensions.
    boxsize : float, optional
        Side of a periodic box; distances then use the flat-torus metric.
        Only supported with the tree.
    """

    def __init__(self, points, method="auto", boxsize=None, leafsize=16):
        mat = as_matrix(points)
        if mat.n_rows < 1:
            raise EmptyInput("cannot index an empty matrix")
        self.matrix = mat
        self.points = mat.data
        self.boxsize = boxsize
        if method == "auto":
            method = "tree" if (mat.d < BRUTE_FORCE_MIN_DIM or boxsize) else "brute"
        if method not in ("tree", "brute"):
            raise ValueError(f"unknown method {method!r}")
        if method == "brute" and boxsize is not None:
            raise ValueError("periodic boxes need the tree method")
        self.method = method
        self._tree = None
        self._sqnorm = None
        if method == "tree":
            self._tree = cKDTree(self.points, leafsize=leafsize,
                                 boxsize=boxsize, copy_data=False)
        else:
            self._sqnorm = np.einsum("ij,ij->i", self.points, self.points)

    @property
    def n(self):
        return self.points.shape[0]

    # -- public queries ---------------------------------------------------

    def query(self, x) -> int:
        """Row index of the nearest point to ``x``."""
        _, idx = self.knn(np.atleast_2d(np.asarray(x, dtype=float)), 1)
        return int(idx[0, 0])

    def query_excluding(self, x, forbidden_index: int) -> int:
        _, idx = self.knn(np.atleast_2d(np.asarray(x, dtype=float)), 1,
                          exclude=np.array([forbidden_index]))
        return int(idx[0, 0])

    def query_many(self, queries):
        dist, idx = self.knn(queries, 1)
        return idx[:, 0], dist[:, 0]

    def knn(self, queries, k, exclude=None):
        """The ``k`` nearest rows of every query, sorted by (distance, index).

        Parameters
        ----------
        queries : array_like, shape (q, d)
        k : int
        exclude : array_like of int, shape (q,), optional
            One row index per query that must not be returned.

        Returns
        -------
        dist, idx : ndarray, shape (q, k)
        """
        q = np.ascontiguousarray(np.atleast_2d(np.asarray(queries, dtype=float)))
        if q.shape[1] != self.points.shape[1]:
            raise ValueError("query dimension does not match the index")
        avail = self.n - (0 if exclude is None else 1)
        if k < 1 or k > avail:
            raise ValueError(f"k={k} but only {avail} rows are eligible")
        if exclude is not None:
            exclude = np.asarray(exclude, dtype=np.intp).reshape(-1)
        n_cand = min(self.n, k + _EXTRA_CANDIDATES + (exclude is not None))

        out_d = np.empty((q.shape[0], k))
        out_i = np.empty((q.shape[0], k), dtype=np.intp)
        step = max(1, _CHUNK_ENTRIES // max(1, self.n if self.method == "brute" else 64))
        for lo in range(0, q.shape[0], step):
            hi = min(q.shape[0], lo + step)
            ex = None if exclude is None else exclude[lo:hi]
            out_d[lo:hi], out_i[lo:hi] = self._knn_block(q[lo:hi], k, n_cand, ex)
        return out_d, out_i

    # -- internals --------------------------------------------------------

    def _knn_block(self, q, k, n_cand, exclude):
        if n_cand >= self.n:
            cand = np.broadcast_to(np.arange(self.n), (q.shape[0], self.n)).copy()
            bound = np.full(q.shape[0], np.inf)
        elif self.method == "tree":
            tdist, cand = self._tree.query(q, k=n_cand)
            cand = np.asarray(cand, dtype=np.intp).reshape(q.shape[0], n_cand)
            tdist = np.asarray(tdist).reshape(q.shape[0], n_cand)
            # rows outside the candidate set are at least this far away
            bound = tdist[:, -1] * (1.0 - 1e-12)
        else:
            est = (self._sqnorm[None, :] - 2.0 * (q @ self.points.T)
                   + np.einsum("ij,ij->i", q, q)[:, None])
            cand = np.argpartition(est, n_cand - 1, axis=1)[:, :n_cand]
            edge = np.take_along_axis(est, cand, axis=1).max(axis=1)
            tol = _SCREEN_RTOL * (np.einsum("ij,ij->i", q, q) + self._sqnorm.max()) + 1e-300
            bound = np.sqrt(np.maximum(edge - tol, 0.0))
            # a zero bound carries no information, force the exact fallback
            bound[edge - tol <= 0.0] = -1.0

        dist = exact_distances(q, self.points, cand, self.boxsize)
        if exclude is not None:
            dist = np.where(cand == exclude[:, None], np.inf, dist)
        dist, cand = _rank(dist, cand, k)

        unsafe = ~(dist[:, -1] < bound)
        if np.isinf(bound).any():
            unsafe &= ~np.isinf(bound)
        for r in np.flatnonzero(unsafe):
            dist[r], cand[r] = self._scan(q[r], k, None if exclude is None else exclude[r])
        return dist, cand

    def _scan(self, x, k, forbidden):
        idx = np.arange(self.n)
        dist = exact_distances(x[None, :], self.points, idx[None, :], self.boxsize)[0]
        if forbidden is not None:
            dist[forbidden] = np.inf
        order = np.lexsort((idx, dist))[:k]
        return dist[order], idx[order]


def build_index(points, method="auto", boxsize=None) -> NnIndex:
    mat = as_matrix(points)
    return NnIndex(mat, method=method, boxsize=boxsize)


@dataclass
class NnDistances:
    d_values: np.ndarray
    c_values: np.ndarray
    nn_indices: np.ndarray

    @property
    def n(self):
        return len(self.d_values)


def compute_distances(baseline, cases, tie_break="lowest", rng=None,
                      index: NnIndex = None) -> NnDistances:
    """Nearest-neighbour distances ``D`` and ``C`` for every case row.

    ``C_i`` excludes the located neighbour by row index, so a duplicate of
    that row elsewhere in the baseline yields ``C_i = 0``.

    ``tie_break="random"`` picks uniformly among equidistant rows using
    ``rng`` instead of the lowest index; it scans the baseline directly and
    is meant for small fidelity studies.
    """
    U = as_matrix(baseline)
    V = as_matrix(cases)
    check_same_dimension(U, V)
    if U.n_rows < 2:
        raise InsufficientBaseline("baseline needs at least two rows")
    if tie_break == "random":
        if rng is None:
            raise ValueError("random tie-breaking needs an rng")
        return _random_tie_distances(U.data, V.data, rng)
    if tie_break != "lowest":
        raise ValueError(f"unknown tie_break {tie_break!r}")

    if index is None:
        index = NnIndex(U)
    d_val, nn = index.knn(V.data, 1)
    d_val, nn = d_val[:, 0], nn[:, 0]
    uniq, inv = np.unique(nn, return_inverse=True)
    c_uniq, _ = index.knn(U.data[uniq], 1, exclude=uniq)
    return NnDistances(d_val, c_uniq[:, 0][inv], nn)


def _random_tie_distances(U, V, rng):
    all_idx = np.arange(U.shape[0])
    d_val = np.empty(V.shape[0])
    c_val = np.empty(V.shape[0])
    nn = np.empty(V.shape[0], dtype=np.intp)
    for i, v in enumerate(V):
        dist = exact_distances(v[None, :], U, all_idx[None, :])[0]
        ties = np.flatnonzero(dist == dist.min())
        j = int(ties[rng.integers(0, len(ties))])
        nn[i], d_val[i] = j, dist[j]
        dist = exact_distances(U[j][None, :], U, all_idx[None, :])[0]
        dist[j] = np.inf
        ties = np.flatnonzero(dist == dist.min())
        c_val[i] = dist[int(ties[rng.integers(0, len(ties))])]
    return NnDistances(d_val, c_val, nn)


def _mean(x):
    return math.fsum(np.asarray(x, dtype=float).tolist()) / len(x)


def truh_statistic(distances: NnDistances, d: int, tau_fc: float = 1.0) -> float:
    """``n**(1/d) * |tau_fc * mean(D) - mean(C)|``; ``tau_fc = 1`` is the plain statistic."""
    if not tau_fc >= 1.0:
        raise InvalidTau(f"tau_fc must be >= 1, got {tau_fc}")
    n = len(distances.d_values)
    if n == 0 or len(distances.c_values) != n:
        raise EmptyDistances("no case distances")
    if d < 1:
        raise ValueError("dimension must be positive")
    return n ** (1.0 / d) * abs(tau_fc * _mean(distances.d_values)
                                - _mean(distances.c_values))


def split_distances(points, knn_idx, knn_dist, surrogate, residual_mask):
    """``D`` and ``C`` when a subset of one sample plays the cases.

    ``surrogate`` rows of ``points`` act as cases and the rows flagged in
    ``residual_mask`` as the baseline.  ``knn_idx``/``knn_dist`` hold each
    row's nearest *other* rows sorted by (distance, index); the first
    residual entry of a list is then the exact residual nearest neighbour.
    Lists without any residual entry fall back to a direct scan.
    """
    D, nn = _first_residual(points, knn_idx, knn_dist, surrogate, residual_mask)
    uniq, inv = np.unique(nn, return_inverse=True)
    C, _ = _first_residual(points, knn_idx, knn_dist, uniq, residual_mask)
    return NnDistances(D, C[inv], nn)


def _first_residual(points, knn_idx, knn_dist, rows, residual_mask):
    lists = knn_idx[rows]
    ok = residual_mask[lists]
    pos = np.argmax(ok, axis=1)
    found = ok[np.arange(len(rows)), pos]
    dist = knn_dist[rows, pos]
    nn = lists[np.arange(len(rows)), pos]
    missing = np.flatnonzero(~found)
    if missing.size:
        cand = np.flatnonzero(residual_mask)
        for r in missing:
            row = rows[r]
            c = cand[cand != row]
            dd = exact_distances(points[row][None, :], points, c[None, :])[0]
            o = np.lexsort((c, dd))[0]
            dist[r], nn[r] = dd[o], c[o]
    return dist, nn
