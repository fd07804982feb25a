"""Mixture generators and the simulation experiments.

Named scenarios:

==============  ==========================================================
Exp1-I/II       three-component Gaussian mixture baseline in ``d`` dims
Exp1-Fig3       the two-dimensional motivating example (three panels)
Exp2-I/II       Gamma/Exponential Gaussian-copula mixture
Exp3-I/II       the same mixture with coordinate-wise zero inflation
Table1-CaseA/B  univariate location mixtures (remodeling vs preferential
                infection)
==============  ==========================================================

Random scenario parameters (covariances, Rademacher shifts, zero-inflation
probabilities) are drawn once from the experiment seed and held fixed
across repetitions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammainccinv, log_ndtr, ndtr

from .baselines import (edgecount_cutoff, edgecount_statistic,
                        edgecount_test_permutation, energy_test)
from .calibrate import (BootstrapConfig, Corners, Dirichlet, estimate_classes,
                        null_diagnostics, redecide, truh_test)
from .core import (InvalidTau, RngStream, SampleMatrix, TruhError, label,
                   parallel_map)

__all__ = ["Gaussian", "GammaCopula", "ExpCopula", "ZeroInflated", "MixtureSpec",
           "sample_mixture", "Scenario", "SCENARIOS", "build_scenario",
           "ExperimentReport", "run_experiment", "run_tau_sweep",
           "UnknownScenario", "NotPositiveDefinite", "InvalidSpec",
           "random_covariance", "tapered_correlation", "METHODS",
           "null_diagnostics"]

METHODS = ("truh", "edgecount_asymptotic", "edgecount_permutation", "energy")


class UnknownScenario(TruhError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown scenario"


class NotPositiveDefinite(TruhError, ValueError):
    pass


class InvalidSpec(TruhError, ValueError):
    pass


def _cholesky(matrix, what):
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidSpec(f"{what} must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-10 * max(1.0, np.abs(a).max())):
        raise InvalidSpec(f"{what} must be symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{what} is not positive definite") from exc


def _vector(x, d, what):
    v = np.broadcast_to(np.asarray(x, dtype=float), (d,)).copy()
    if not np.all(np.isfinite(v)):
        raise InvalidSpec(f"{what} must be finite")
    return v


# ---------------------------------------------------------------------------
# components
# ---------------------------------------------------------------------------

class Gaussian:
    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.d = len(self.mean)
        self.cov = np.asarray(cov, dtype=float).reshape(self.d, self.d)
        self._chol = _cholesky(self.cov, "covariance")

    def sample(self, n, rng):
        return self.mean + rng.normal((n, self.d)) @ self._chol.T


class _Copula:
    def __init__(self, corr):
        self.corr = np.atleast_2d(np.asarray(corr, dtype=float))
        self.d = self.corr.shape[0]
        if not np.allclose(np.diag(self.corr), 1.0):
            raise InvalidSpec("copula correlation needs a unit diagonal")
        self._chol = _cholesky(self.corr, "correlation")

    def _latent(self, n, rng):
        return rng.normal((n, self.d)) @ self._chol.T


class GammaCopula(_Copula):
    """Gamma marginals (shape, rate) joined by a Gaussian copula."""

    def __init__(self, shape, rate, corr):
        super().__init__(corr)
        self.shape = _vector(shape, self.d, "shape")
        self.rate = _vector(rate, self.d, "rate")
        if np.any(self.shape <= 0) or np.any(self.rate <= 0):
            raise InvalidSpec("gamma shape and rate must be positive")

    def sample(self, n, rng):
        z = self._latent(n, rng)
        # upper-tail inversion keeps precision for large z
        return gammainccinv(self.shape, ndtr(-z)) / self.rate


class ExpCopula(_Copula):
    def __init__(self, rate, corr):
        super().__init__(corr)
        self.rate = _vector(rate, self.d, "rate")
        if np.any(self.rate <= 0):
            raise InvalidSpec("rate must be positive")

    def sample(self, n, rng):
        # -log(1 - Phi(z)) = -log Phi(-z)
        return -log_ndtr(-self._latent(n, rng)) / self.rate


class ZeroInflated:
    """Sets coordinate ``j`` of an inner draw to zero with probability ``p[j]``."""

    def __init__(self, inner, p):
        self.inner = inner
        self.d = inner.d
        self.p = _vector(p, self.d, "zero probability")
        if np.any(self.p < 0) or np.any(self.p >= 1):
            raise InvalidSpec("zero probabilities must lie in [0, 1)")

    def sample(self, n, rng):
        x = self.inner.sample(n, rng.child(0))
        zero = rng.child(1).uniform((n, self.d)) < self.p
        x[zero] = 0.0
        return x


@dataclass
class MixtureSpec:
    components: list
    weights: Sequence[float]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.components) or len(w) == 0:
            raise InvalidSpec("one weight per component is required")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
            raise InvalidSpec("weights must be non-negative and sum to one")
        dims = {c.d for c in self.components}
        if len(dims) != 1:
            raise InvalidSpec("components disagree on dimension")
        self.weights = w / w.sum()

    @property
    def d(self):
        return self.components[0].d


def sample_mixture(spec: MixtureSpec, n: int, rng: RngStream) -> SampleMatrix:
    """``n`` rows: a component label per row from the weights, then the component draws."""
    if n < 0:
        raise InvalidSpec("n must be non-negative")
    which = rng.child(label("labels")).generator.choice(len(spec.weights), size=n,
                                                        p=spec.weights)
    out = np.empty((n, spec.d))
    for a, comp in enumerate(spec.components):
        rows = np.flatnonzero(which == a)
        if rows.size:
            out[rows] = comp.sample(rows.size, rng.child(label("component"), a))
    return SampleMatrix(out)


# ---------------------------------------------------------------------------
# scenario parameters
# ---------------------------------------------------------------------------

def random_covariance(d, rng, low=1.0, high=10.0):
    """``Q diag(ev) Q'`` with eigenvalues uniform on ``[low, high]`` and Haar ``Q``."""
    ev = rng.uniform(d, low, high)
    q, r = np.linalg.qr(rng.normal((d, d)))
    q = q * np.sign(np.diag(r))
    cov = (q * ev) @ q.T
    return 0.5 * (cov + cov.T)


def tapered_correlation(d, r):
    idx = np.arange(d)
    return float(r) ** np.abs(idx[:, None] - idx[None, :])


@dataclass
class Scenario:
    name: str
    f0: MixtureSpec
    g: MixtureSpec
    null_true: bool
    params: dict = field(default_factory=dict)


def _exp1(d, rng, scenario):
    covs = [random_covariance(d, rng.child(label("sigma"), k)) for k in range(1, 5)]
    mu = [np.zeros(d), -3.0 * np.ones(d), 3.0 * np.ones(d)]
    comps = [Gaussian(mu[k], covs[k]) for k in range(3)]
    f0 = MixtureSpec(comps, [0.3, 0.3, 0.4])
    eps = np.where(rng.child(label("rademacher")).uniform(d) < 0.5, -1.0, 1.0)
    if scenario == "I":
        g = MixtureSpec(comps, [0.1, 0.1, 0.8])
    else:
        g = MixtureSpec([comps[0], Gaussian(4.0 * eps, covs[3])], [0.5, 0.5])
    return f0, g, {"mu4": (4.0 * eps).tolist()}


def _fig3(panel):
    mu1, mu2, mu3 = np.array([0.0, 0.0]), np.array([0.0, -4.0]), np.array([4.0, -2.0])
    eye = np.eye(2)
    comps = [Gaussian(mu1, eye), Gaussian(mu2, eye), Gaussian(mu3, eye)]
    f0 = MixtureSpec(comps, [0.3, 0.3, 0.4])
    if panel == "left":
        g = f0
    elif panel == "center":
        mu4 = 0.25 * mu2 + 0.5 * mu3
        mu5 = 0.75 * mu2 + 1.125 * mu3
        g = MixtureSpec([Gaussian(mu4, eye), Gaussian(mu5, eye)], [0.5, 0.5])
    elif panel == "right":
        g = MixtureSpec(comps, [0.8, 0.1, 0.1])
    else:
        raise InvalidSpec(f"panel must be left, center or right, got {panel!r}")
    return f0, g, {"panel": panel}


def _exp2(d, scenario):
    s1, s2 = tapered_correlation(d, 0.7), tapered_correlation(d, -0.9)
    gam, ex = GammaCopula(5.0, 1.0, s1), ExpCopula(1.0, s2)
    f0 = MixtureSpec([gam, ex], [0.5, 0.5])
    if scenario == "I":
        g = MixtureSpec([ex], [1.0])
    else:
        g = MixtureSpec([GammaCopula(10.0, 0.5, s1), ex], [0.1, 0.9])
    return f0, g, {}


def _exp3(d, rng, scenario):
    s1, s2 = tapered_correlation(d, 0.7), tapered_correlation(d, -0.9)
    n_zi = int(math.floor(0.8 * d))
    p = np.zeros(d)
    p[:n_zi] = rng.child(label("zero-prob")).uniform(n_zi, 0.5, 0.6)
    ex = ExpCopula(1.0, s2)
    f0 = MixtureSpec([ZeroInflated(GammaCopula(5.0, 1.0, s1), p), ZeroInflated(ex, p)],
                     [0.5, 0.5])
    if scenario == "I":
        g = MixtureSpec([ZeroInflated(ex, p)], [1.0])
    else:
        q = np.zeros(d)
        q[:n_zi] = 0.3
        g = MixtureSpec([ZeroInflated(GammaCopula(5.0, 0.5, s1), q), ZeroInflated(ex, q)],
                        [0.5, 0.5])
    return f0, g, {"p": p.tolist()}


def _table1(case):
    one = np.eye(1)
    if case == "A":
        f0 = MixtureSpec([Gaussian([4.0 * a], one) for a in range(3)], [1 / 3] * 3)
        g = MixtureSpec([Gaussian([4.0 * a + 2.0], one) for a in range(3)], [1 / 3] * 3)
    else:
        f0 = MixtureSpec([Gaussian([10.0 * a], one) for a in range(3)], [1 / 3] * 3)
        g = MixtureSpec([Gaussian([20.0 * a], one) for a in range(2)], [0.5, 0.5])
    return f0, g, {}


# name -> (default m, n, d, null true?, dimension fixed?)
SCENARIOS = {
    "Exp1-I": (500, 50, 5, True, False),
    "Exp1-II": (500, 50, 5, False, False),
    "Exp1-Fig3": (2000, 500, 2, None, True),
    "Exp2-I": (500, 50, 5, True, False),
    "Exp2-II": (500, 10, 5, False, False),
    "Exp3-I": (500, 50, 5, True, False),
    "Exp3-II": (500, 10, 5, False, False),
    "Table1-CaseA": (1000, 50, 1, False, True),
    "Table1-CaseB": (1000, 50, 1, True, True),
}


def build_scenario(name: str, d: Optional[int] = None, seed: int = 0,
                   panel: str = "right") -> Scenario:
    if name not in SCENARIOS:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    _, _, d_default, null_true, fixed = SCENARIOS[name]
    if d is None:
        d = d_default
    if fixed and d != d_default:
        raise InvalidSpec(f"{name} is defined for d={d_default} only")
    if d < 1:
        raise InvalidSpec("d must be positive")
    rng = RngStream(seed, [label("params"), label(name.split("-")[0])])
    family, _, variant = name.partition("-")
    if family == "Exp1" and variant != "Fig3":
        f0, g, extra = _exp1(d, rng, variant)
    elif family == "Exp1":
        f0, g, extra = _fig3(panel)
        null_true = panel != "center"
    elif family == "Exp2":
        f0, g, extra = _exp2(d, variant)
    elif family == "Exp3":
        f0, g, extra = _exp3(d, rng, variant)
    else:
        f0, g, extra = _table1(variant[-1])
    return Scenario(name, f0, g, null_true, extra)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    scenario_name: str
    rates: dict            # method -> {alpha (str): rate}
    rejections: dict       # method -> {alpha (str): count}
    reps: int
    config: dict
    seed: int

    def rate(self, method="truh", alpha=None):
        table = self.rates[method]
        if alpha is None:
            if len(table) != 1:
                raise ValueError("several alphas stored; pass one")
            return next(iter(table.values()))
        return table[_akey(alpha)]

    def to_dict(self):
        return {"scenario_name": self.scenario_name, "rates": self.rates,
                "rejections": self.rejections, "reps": self.reps,
                "config": self.config, "seed": self.seed}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self):
        alphas = sorted({a for t in self.rates.values() for a in t}, key=float)
        head = f"{'method':<24}" + "".join(f"{'a=' + a:>10}" for a in alphas)
        lines = [f"{self.scenario_name}  m={self.config['m']} n={self.config['n']} "
                 f"d={self.config['d']} reps={self.reps} seed={self.seed}", head,
                 "-" * len(head)]
        for method, table in self.rates.items():
            cells = "".join(f"{table[a]:>10.3f}" if a in table else f"{'':>10}"
                            for a in alphas)
            lines.append(f"{method:<24}{cells}")
        return "\n".join(lines)


def _akey(alpha):
    return repr(float(alpha))


def _rep_decisions(scenario, r, m, n, methods, alphas, taus, cfg, seed, n_perm):
    root = RngStream(seed, [label("rep"), r])
    U = sample_mixture(scenario.f0, m, root.child(label("baseline")))
    V = sample_mixture(scenario.g, n, root.child(label("cases")))
    out = {}
    if "truh" in methods:
        truh_seed = root.child(label("truh")).seed64()
        clusters = None
        for tau in taus:
            config = BootstrapConfig(alpha=alphas[0], tau_fc=tau, seed=truh_seed,
                                     **cfg)
            if clusters is None:
                clusters = estimate_classes(U.data, config,
                                            RngStream(truh_seed).child(label("cluster")))
            res = truh_test(U, V, config, clusters=clusters)
            key = "truh" if len(taus) == 1 else f"truh(tau={tau:g})"
            out[key] = [redecide(res, a).reject for a in alphas]
    if "edgecount_asymptotic" in methods:
        from .constants import delta_mst_table
        R = edgecount_statistic(U, V)
        delta = delta_mst_table(U.d)
        out["edgecount_asymptotic"] = [R < edgecount_cutoff(m, n, a, delta) for a in alphas]
    if "edgecount_permutation" in methods:
        res = edgecount_test_permutation(U, V, alphas[0], n_perm, root.child(label("ecperm")))
        out["edgecount_permutation"] = [res.p_value <= a for a in alphas]
    if "energy" in methods:
        res = energy_test(U, V, alphas[0], n_perm, root.child(label("energy")))
        out["energy"] = [res.p_value <= a for a in alphas]
    return out


def run_experiment(name: str, m: int = None, n: int = None, d: int = None,
                   reps: int = 100, alpha=0.05, tau_fc=1.0, methods=("truh", "edgecount_asymptotic"),
                   seed: int = 0, b2: int = 200, mixing="corners", beta: float = 0.1,
                   b1: int = None, panel: str = "right", n_perm: int = 199,
                   threads: int = 1, tau_values=None) -> ExperimentReport:
    """Rejection rates of the requested methods over ``reps`` simulated data sets.

    ``alpha`` may be a list; TRUH decisions at every level reuse one set of
    null replicates.  ``tau_values`` (several ``tau_fc``) yields one TRUH
    column per value on common data.
    """
    if name not in SCENARIOS:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    m0, n0, d0, _, _ = SCENARIOS[name]
    m, n, d = m or m0, n or n0, d or d0
    alphas = sorted(float(a) for a in np.atleast_1d(alpha))
    taus = [float(t) for t in (tau_values if tau_values is not None else [tau_fc])]
    if any(not t >= 1.0 for t in taus):
        raise InvalidTau("tau_fc must be >= 1")
    methods = tuple(methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise InvalidSpec(f"unknown methods {sorted(unknown)}")
    if reps < 1 or m < 2 or n < 1:
        raise InvalidSpec("reps, m and n must be positive (m >= 2)")
    if isinstance(mixing, str):
        mixing = Corners() if mixing == "corners" else Dirichlet(beta)
    scenario = build_scenario(name, d, seed, panel)
    cfg = dict(b2=b2, mixing_mode=mixing, b1=b1, threads=1)
    # validate the bootstrap settings once, before spending time
    BootstrapConfig(alpha=alphas[0], tau_fc=taus[0], **cfg)

    results = parallel_map(
        lambda r: _rep_decisions(scenario, r, m, n, methods, alphas, taus, cfg, seed, n_perm),
        range(reps), threads)
    counts = {}
    for res in results:
        for method, flags in res.items():
            row = counts.setdefault(method, [0] * len(alphas))
            for i, flag in enumerate(flags):
                row[i] += bool(flag)
    rejections = {mth: {_akey(a): c for a, c in zip(alphas, row)} for mth, row in counts.items()}
    rates = {mth: {k: v / reps for k, v in row.items()} for mth, row in rejections.items()}
    config = {"m": m, "n": n, "d": d, "alphas": alphas, "tau_values": taus,
              "methods": list(methods), "b2": b2, "mixing": str(mixing),
              "panel": panel if name == "Exp1-Fig3" else None, "n_perm": n_perm,
              "params": scenario.params}
    return ExperimentReport(name, rates, rejections, reps, config, int(seed))


def run_tau_sweep(base_scenario: str, tau_values=(1.0, 1.2, 1.4), reps: int = 100,
                  **overrides):
    """One report per ``tau_fc``, all on the same simulated data sets."""
    taus = [float(t) for t in tau_values]
    if any(not t >= 1.0 for t in taus):
        raise InvalidTau("tau_fc must be >= 1")
    overrides = dict(overrides)
    overrides["methods"] = ("truh",)
    joint = run_experiment(base_scenario, reps=reps, tau_values=taus, **overrides)
    reports = []
    for tau in taus:
        key = "truh" if len(taus) == 1 else f"truh(tau={tau:g})"
        cfg = dict(joint.config, tau_values=[tau])
        reports.append(ExperimentReport(joint.scenario_name, {"truh": joint.rates[key]},
                                        {"truh": joint.rejections[key]}, reps, cfg, joint.seed))
    return reports
