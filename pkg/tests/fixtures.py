"""Shared synthetic data for the test suite."""

import numpy as np


def cytof_like(m=25_000, n=250, d=35, k=6, seed=11):
    """Arcsinh-scale marker panel: ``k`` cell types, half the markers off per type.

    Baseline weights are uneven; cases come from the same cell types at
    other proportions, so the mixture null holds.
    """
    g = np.random.default_rng(seed)
    means = g.choice([0.0, 2.0, 4.0], size=(k, d), p=[0.5, 0.25, 0.25])
    scales = g.uniform(0.3, 0.7, size=(k, d))
    w0 = g.dirichlet(np.full(k, 5.0))
    w1 = g.dirichlet(np.full(k, 1.0))

    def draw(size, w):
        lab = g.choice(k, size=size, p=w)
        raw = means[lab] + scales[lab] * g.standard_normal((size, d))
        return np.arcsinh(np.sinh(np.maximum(raw, 0.0)))

    return draw(m, w0), draw(n, w1)


def write_csv(path, X, header=None):
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
