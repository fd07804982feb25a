"""Dimension constants for the large-sample limit of the statistic.

For a rate-one homogeneous Poisson process in ``R^d``:

* ``zeta1`` is the expected distance from the origin to its nearest point,
* ``zeta2`` is the expected distance from that point to its own nearest
  point (origin excluded),
* ``delta_d = zeta2 - zeta1``.

``zeta1`` has the closed form ``V_d**(-1/d) * Gamma(1 + 1/d)``; ``zeta2``
is only available by simulation.  Two simulation modes are provided:
``CUBE`` samples the unit cube and carries boundary bias that grows with
``d``; ``TORUS`` wraps the cube into a flat torus and has none.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .core import RngStream, TruhError, label, parallel_map
from .nn import NnIndex

__all__ = ["ConstantsMode", "DimensionConstants", "InvalidL",
           "unit_ball_volume", "zeta1_closed_form", "closed_form_constants",
           "estimate_constants_mc", "REFERENCE_CUBE_ESTIMATES", "cube_constants",
           "limit_functional", "gamma_cutoff", "gaussian_base_integral",
           "quad_1d", "estimate_delta_mst", "delta_mst_table", "mst_center_degrees"]


class InvalidL(TruhError, ValueError):
    pass


class ConstantsMode(str, enum.Enum):
    CLOSED_FORM = "closed"
    CUBE = "cube"
    TORUS = "torus"
    REFERENCE = "reference"


@dataclass
class DimensionConstants:
    d: int
    zeta1: float
    zeta2: Optional[float]
    delta_d: Optional[float]
    se_zeta1: float = 0.0
    se_zeta2: float = 0.0
    se_delta: float = 0.0
    mode: ConstantsMode = ConstantsMode.CUBE
    n_points: int = 0
    reps: int = 0


# Unit-cube estimates with m = n = 100000 points averaged over 20 runs.
REFERENCE_CUBE_ESTIMATES = {
    1: (0.5006, 0.7493, 0.2487),
    2: (0.5008, 0.5969, 0.0961),
    3: (0.5580, 0.6155, 0.0574),
    4: (0.6187, 0.6572, 0.0385),
    5: (0.6782, 0.7054, 0.0271),
    6: (0.7361, 0.7548, 0.0187),
}


def unit_ball_volume(d: int) -> float:
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0))


def zeta1_closed_form(d: int) -> float:
    """``(1 / V_d)**(1/d) * Gamma((d + 1) / d)``."""
    if d < 1:
        raise ValueError("dimension must be positive")
    log_vd = 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)
    return math.exp(-log_vd / d + gammaln(1.0 + 1.0 / d))


def closed_form_constants(d: int) -> DimensionConstants:
    return DimensionConstants(d, zeta1_closed_form(d), None, None,
                              mode=ConstantsMode.CLOSED_FORM)


def _one_rep(d, n_points, boxsize, stream):
    U = stream.child(0).uniform((n_points, d))
    V = stream.child(1).uniform((n_points, d))
    index = NnIndex(U, method="tree", boxsize=boxsize)
    dist, nn = index.knn(V, 1)
    D, nn = dist[:, 0], nn[:, 0]
    uniq, inv = np.unique(nn, return_inverse=True)
    c_uniq, _ = index.knn(U[uniq], 1, exclude=uniq)
    C = c_uniq[:, 0][inv]
    scale = n_points ** (1.0 / d)
    return scale * math.fsum(D) / n_points, scale * math.fsum(C) / n_points


def estimate_constants_mc(d: int, n_points: int = 100_000, reps: int = 20,
                          mode=ConstantsMode.CUBE, rng: RngStream = None,
                          threads: int = 1) -> DimensionConstants:
    """Monte-Carlo estimates of ``zeta1`` and ``zeta2``.

    Each repetition draws ``n_points`` uniform baseline points and as many
    uniform query points, then averages ``n**(1/d) * D`` and
    ``n**(1/d) * C`` over the queries.  Standard errors are across
    repetitions.
    """
    mode = ConstantsMode(mode)
    if mode not in (ConstantsMode.CUBE, ConstantsMode.TORUS):
        raise ValueError("mode must be cube or torus")
    if n_points < 1000:
        raise ValueError("use at least 1000 points")
    if d < 1 or reps < 1:
        raise ValueError("d and reps must be positive")
    rng = rng or RngStream(0)
    boxsize = 1.0 if mode is ConstantsMode.TORUS else None
    runs = np.array(parallel_map(
        lambda r: _one_rep(d, n_points, boxsize, rng.child(label("zeta"), d, r)),
        range(reps), threads))
    z1, z2 = runs[:, 0], runs[:, 1]
    se = (lambda x: float(np.std(x, ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan)
    zeta1 = float(np.mean(z1))
    zeta2 = float(np.mean(z2))
    return DimensionConstants(d, zeta1, zeta2, zeta2 - zeta1, se(z1), se(z2),
                              se(z2 - z1), mode, n_points, reps)


def cube_constants(d: int, rng: RngStream = None) -> DimensionConstants:
    """Cube-sampled constants: the reference table when it covers ``d``."""
    if d in REFERENCE_CUBE_ESTIMATES:
        z1, z2, delta = REFERENCE_CUBE_ESTIMATES[d]
        return DimensionConstants(d, z1, z2, z2 - z1, mode=ConstantsMode.REFERENCE,
                                  n_points=100_000, reps=20)
    return estimate_constants_mc(d, 100_000, 20, ConstantsMode.CUBE, rng)


def limit_functional(density_ratio_integral: float, rho: float,
                     constants: DimensionConstants) -> float:
    """``rho**(1/d) * delta_d * integral(g / f0**(1/d))``."""
    if not density_ratio_integral >= 0 or not math.isfinite(density_ratio_integral):
        raise ValueError("density ratio integral must be finite and non-negative")
    if rho <= 0:
        raise ValueError("rho must be positive")
    return rho ** (1.0 / constants.d) * constants.delta_d * density_ratio_integral


def gamma_cutoff(d: int, rho: float, weight_lower_bound_L: float,
                 base_density_integral: float, constants: DimensionConstants) -> float:
    """Analytic cutoff ``rho**(1/d) delta_d L**(-1/d) integral(p**(1 - 1/d))``.

    Rejecting when the statistic exceeds this value has vanishing type I
    error in location families whose weights are all at least ``L``.
    """
    L = weight_lower_bound_L
    if not 0.0 < L <= 1.0:
        raise InvalidL(f"L must lie in (0, 1], got {L}")
    if constants.d != d:
        raise ValueError("constants were computed for another dimension")
    return (rho ** (1.0 / d) * constants.delta_d * L ** (-1.0 / d)
            * base_density_integral)


def gaussian_base_integral(d: int) -> float:
    """``integral(phi_d(z)**(1 - 1/d) dz)`` for the standard normal density."""
    if d == 1:
        return math.inf
    return math.sqrt(2.0 * math.pi) * (1.0 - 1.0 / d) ** (-0.5 * d)


def quad_1d(f, a=-math.inf, b=math.inf, rtol=1e-8) -> float:
    value, _ = integrate.quad(f, a, b, epsrel=rtol, epsabs=0.0, limit=200)
    return float(value)


# ---------------------------------------------------------------------------
# MST degree variance
# ---------------------------------------------------------------------------

def mst_center_degrees(d: int, n_points: int, reps: int, rng: RngStream,
                       threads: int = 1) -> np.ndarray:
    """MST degree of a point at the cube centre, one value per repetition."""
    from .baselines import build_mst

    def one(r):
        s = rng.child(label("delta-centre"), d, r)
        X = np.vstack([np.full((1, d), 0.5), s.uniform((n_points, d))])
        return build_mst(X).degrees()[0]

    return np.array(parallel_map(one, range(reps), threads), dtype=float)


def _torus_degree_variance(d, n_points, stream):
    from .baselines import build_mst
    deg = build_mst(stream.uniform((n_points, d)), boxsize=1.0).degrees()
    mean = 2.0 * (n_points - 1) / n_points
    return float(np.mean((deg - mean) ** 2))


def estimate_delta_mst(d: int, n_points: int = 1000, reps: int = 40,
                       rng: RngStream = None, threads: int = 1,
                       return_se: bool = False, method: str = "torus"):
    """Variance of the MST degree of a typical point of a Poisson process.

    ``method="torus"`` (default) builds the MST of uniform points on the
    flat unit torus, where every point is exchangeable and there is no
    boundary, and pools the degree variance over all points of a
    repetition.  ``method="centre"`` instead tags a point added at the
    centre of the unit cube and takes the variance of its degree across
    repetitions; in high dimension the centre is much closer to the
    cloud than a typical point, so this variant is strongly biased there.

    With ``return_se`` the Monte-Carlo standard error is returned as well.
    """
    if n_points < 1000:
        raise ValueError("use at least 1000 points")
    if reps < 2:
        raise ValueError("need at least two repetitions")
    rng = rng or RngStream(0)
    if method == "torus":
        per_rep = np.array(parallel_map(
            lambda r: _torus_degree_variance(d, n_points, rng.child(label("delta"), d, r)),
            range(reps), threads))
        var = float(per_rep.mean())
        se = float(per_rep.std(ddof=1) / math.sqrt(reps))
    elif method in ("centre", "center"):
        deg = mst_center_degrees(d, n_points, reps, rng, threads)
        var = float(np.var(deg, ddof=1))
        se = float(np.std((deg - deg.mean()) ** 2, ddof=1) / math.sqrt(reps))
    else:
        raise ValueError(f"unknown method {method!r}")
    return (var, se) if return_se else var


@functools.lru_cache(maxsize=None)
def _delta_file():
    try:
        text = resources.files("truh").joinpath("_data/delta_mst.json").read_text()
    except (FileNotFoundError, OSError):
        return {}
    return {int(k): v for k, v in json.loads(text)["delta"].items()}


@functools.lru_cache(maxsize=None)
def delta_mst_table(d: int) -> float:
    """Cached ``delta_d``; dimensions outside the shipped table are simulated."""
    table = _delta_file()
    if d in table:
        return float(table[d]["value"])
    return estimate_delta_mst(d, 1000, 20, RngStream(label("delta-table")))
