"""Number-of-subgroups estimation: k-means and prediction strength.

Labels are 0-based (``0 .. k_hat-1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RngStream, TruhError, as_matrix, label

__all__ = ["KTooLarge", "ClusteringEstimate", "kmeans", "prediction_strength",
           "DEFAULT_THRESHOLD", "DEFAULT_SPLITS", "DEFAULT_K_MAX",
           "DEFAULT_N_INIT"]

DEFAULT_THRESHOLD = 0.8
DEFAULT_SPLITS = 5
DEFAULT_K_MAX = 10
DEFAULT_N_INIT = 3


class KTooLarge(TruhError, ValueError):
    pass


@dataclass
class ClusteringEstimate:
    k_hat: int
    assignments: np.ndarray
    centroids: np.ndarray
    class_sizes: np.ndarray
    wcss: float
    n_iter: int = 0
    prediction_strengths: dict = field(default_factory=dict)

    def members(self, a):
        """Row indices of class ``a``."""
        return np.flatnonzero(self.assignments == a)


def _sq_dists(X, C, x_sq):
    c_sq = np.einsum("ij,ij->i", C, C)
    d2 = x_sq[:, None] - 2.0 * (X @ C.T) + c_sq[None, :]
    return np.maximum(d2, 0.0)


def _plusplus(X, k, x_sq, gen):
    """Greedy k-means++: each new centre is the best of a few D^2 draws."""
    n = X.shape[0]
    trials = 2 + int(np.log(k))
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[gen.integers(n)]
    closest = _sq_dists(X, centers[:1], x_sq)[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # fewer distinct points than clusters requested
            centers[j] = X[gen.integers(n)]
            continue
        picks = np.searchsorted(np.cumsum(closest), gen.uniform(size=trials) * total,
                                side="right")
        picks = np.minimum(picks, n - 1)
        cand = np.minimum(closest[:, None], _sq_dists(X, X[picks], x_sq))
        best = int(np.argmin(cand.sum(axis=0)))
        centers[j] = X[picks[best]]
        closest = cand[:, best]
    return centers


def kmeans(points, k: int, max_iter: int = 100, rng: RngStream = None,
           n_init: int = DEFAULT_N_INIT) -> ClusteringEstimate:
    """Lloyd's algorithm from greedy k-means++ seeds, best of ``n_init`` starts.

    Each start stops when no assignment changes or after ``max_iter``
    iterations.  A cluster that empties takes over the point farthest from
    its centroid among clusters with more than one member.
    """
    X = np.asarray(as_matrix(points).data)
    n = X.shape[0]
    if k < 1 or k > n:
        raise KTooLarge(f"cannot form {k} clusters from {n} points")
    if n_init < 1:
        raise ValueError("n_init must be positive")
    if rng is None:
        rng = RngStream(0)
    if k == n:
        assign = np.arange(n)
        return ClusteringEstimate(k, assign, X.copy(), np.ones(n, dtype=int), 0.0, 0)
    x_sq = np.einsum("ij,ij->i", X, X)
    best = None
    for start in range(n_init):
        fit = _lloyd(X, k, x_sq, max_iter, rng.child(start).generator)
        if best is None or fit.wcss < best.wcss:
            best = fit
    return best


def _lloyd(X, k, x_sq, max_iter, gen):
    n = X.shape[0]
    centers = _plusplus(X, k, x_sq, gen)
    assign = np.full(n, -1)
    prev_wcss = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(X, centers, x_sq)
        new = np.argmin(d2, axis=1)
        sizes = np.bincount(new, minlength=k)
        for empty in np.flatnonzero(sizes == 0):
            # move the worst-served point of a multi-member cluster into it
            own = np.where(sizes[new] > 1, d2[np.arange(n), new], -1.0)
            far = int(np.argmax(own))
            centers[empty] = X[far]
            d2[:, empty] = np.sum((X - X[far]) ** 2, axis=1)
            new[far] = empty
            sizes = np.bincount(new, minlength=k)
        wcss = float(d2[np.arange(n), new].sum())
        assert wcss <= prev_wcss * (1 + 1e-9) + 1e-9, "k-means WCSS increased"
        prev_wcss = wcss
        if np.array_equal(new, assign):
            break
        assign = new
        onehot = np.zeros((n, k))
        onehot[np.arange(n), assign] = 1.0
        centers = (onehot.T @ X) / sizes[:, None]

    wcss = float(np.sum((X - centers[assign]) ** 2))
    sizes = np.bincount(assign, minlength=k)
    return ClusteringEstimate(k, assign, centers, sizes, wcss, it)


def _strength(test_labels, predicted, k):
    worst = 1.0
    for c in range(k):
        members = predicted[test_labels == c]
        size = len(members)
        if size < 2:
            continue
        counts = np.bincount(members, minlength=k).astype(float)
        together = float(np.sum(counts * (counts - 1.0))) / (size * (size - 1.0))
        worst = min(worst, together)
    return worst


def prediction_strength(points, k_max: int = DEFAULT_K_MAX,
                        n_splits: int = DEFAULT_SPLITS,
                        threshold: float = DEFAULT_THRESHOLD,
                        rng: RngStream = None, max_iter: int = 100) -> ClusteringEstimate:
    """Choose the number of clusters by prediction strength.

    Each split halves the data at random and clusters both halves.  Test
    points are then assigned to the nearest training centroid, and for
    every test cluster we record the fraction of its point pairs that the
    training centroids keep together.  The strength of ``k`` is the
    smallest such fraction, averaged over splits.  ``k_hat`` is the largest
    ``k`` whose strength reaches ``threshold``; final labels come from
    k-means on all of the data.
    """
    X = np.asarray(as_matrix(points).data)
    n = X.shape[0]
    if k_max < 1:
        raise ValueError("k_max must be positive")
    if n < 2 * k_max:
        raise KTooLarge(f"need at least {2 * k_max} rows for k_max={k_max}")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    if rng is None:
        rng = RngStream(0)

    strengths = {1: 1.0}
    if k_max > 1:
        totals = np.zeros(k_max + 1)
        for s in range(n_splits):
            split = rng.child(label("split"), s)
            perm = split.permutation(n)
            train, test = X[perm[: n // 2]], X[perm[n // 2:]]
            t_sq = np.einsum("ij,ij->i", test, test)
            for k in range(2, k_max + 1):
                fit_train = kmeans(train, k, max_iter, split.child(k, 0))
                fit_test = kmeans(test, k, max_iter, split.child(k, 1))
                predicted = np.argmin(_sq_dists(test, fit_train.centroids, t_sq), axis=1)
                totals[k] += _strength(fit_test.assignments, predicted, k)
        for k in range(2, k_max + 1):
            strengths[k] = float(totals[k] / n_splits)

    k_hat = max(k for k, ps in strengths.items() if ps >= threshold)
    final = kmeans(X, k_hat, max_iter, rng.child(label("final")))
    final.prediction_strengths = strengths
    return final
