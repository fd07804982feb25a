"""Independent reference implementations used as test oracles.

Everything here is deliberately naive: plain Python loops, exact
``math`` arithmetic and exhaustive enumeration.  None of it shares code
with the package.
"""

import itertools
import math


def dist(a, b):
    return math.sqrt(math.fsum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def brute_nn(points, x, forbidden=None):
    """Index of the nearest row of ``points`` to ``x``; ties go to the lowest index."""
    best, best_j = math.inf, None
    for j, p in enumerate(points):
        if j == forbidden:
            continue
        dj = dist(p, x)
        if dj < best:
            best, best_j = dj, j
    return best_j, best


def brute_truh(U, V, tau=1.0):
    n, d = len(V), len(V[0])
    D, C = [], []
    for v in V:
        j, dj = brute_nn(U, v)
        _, cj = brute_nn(U, U[j], forbidden=j)
        D.append(dj)
        C.append(cj)
    return n ** (1.0 / d) * abs(tau * math.fsum(D) / n - math.fsum(C) / n), D, C


def kruskal_weight(points):
    n = len(points)
    edges = sorted((dist(points[i], points[j]), i, j)
                   for i in range(n) for j in range(i + 1, n))
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    total, used = [], 0
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            total.append(w)
            used += 1
    return math.fsum(total)


def _prufer_edges(seq, n):
    degree = [1] * n
    for s in seq:
        degree[s] += 1
    edges = []
    for s in seq:
        leaf = min(i for i in range(n) if degree[i] == 1)
        edges.append((leaf, s))
        degree[leaf] -= 1
        degree[s] -= 1
    u, v = [i for i in range(n) if degree[i] == 1]
    edges.append((u, v))
    return edges


def enumerate_min_tree_weight(points):
    """Minimum total length over all ``n**(n-2)`` labelled spanning trees."""
    n = len(points)
    if n == 1:
        return 0.0
    if n == 2:
        return dist(points[0], points[1])
    w = [[dist(points[i], points[j]) for j in range(n)] for i in range(n)]
    best = math.inf
    for seq in itertools.product(range(n), repeat=n - 2):
        best = min(best, math.fsum(w[a][b] for a, b in _prufer_edges(seq, n)))
    return best
