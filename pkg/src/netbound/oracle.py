"""Brute-force reference computations for tests and acceptance runs.

Nothing here reuses estimator code: the scans, the explicit worst-case
distributions and the enumerations are deliberately slow and direct.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .dgp import DgpConfig, Dataset, outcome_mean, true_effects, true_propensity
from .exposure import ExposureSpec
from .netgraph import Graph, khop_matrix

MAX_ENUM_DEGREE = 20


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscreteConditional:
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.support, float)
        p = np.asarray(self.probs, float)
        if y.shape != p.shape or y.ndim != 1 or y.size == 0:
            raise OracleError("support and probs must be matching nonempty vectors")
        if np.any(np.diff(y) <= 0):
            raise OracleError("support must be strictly increasing")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise OracleError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "support", y)
        object.__setattr__(self, "probs", p)

    @property
    def mean(self) -> float:
        return float(self.support @ self.probs)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    @classmethod
    def random(cls, rng, size=None) -> "DiscreteConditional":
        m = int(size or rng.integers(1, 12))
        y = np.sort(rng.choice(np.arange(-50, 51), size=m, replace=False) / 10.0)
        p = rng.dirichlet(np.ones(m))
        p[-1] = 1.0 - p[:-1].sum()
        return cls(y, p)


def _levels(b_minus, b_plus):
    if abs(b_plus - b_minus) < 1e-12:
        return 0.5, 0.5
    return ((1 - b_minus) * b_plus / (b_plus - b_minus),
            (1 - b_plus) * b_minus / (b_minus - b_plus))


def rockafellar_scan(dc: DiscreteConditional, b_minus, b_plus, grid_size=10_000):
    """Minimize L+(q) and maximize L-(q) over a dense grid plus every atom."""
    y, p = dc.support, dc.probs
    grid = np.union1d(np.linspace(y[0] - 1, y[-1] + 1, grid_size), y)
    up = np.maximum(y[None, :] - grid[:, None], 0) @ p
    down = np.maximum(grid[:, None] - y[None, :], 0) @ p
    l_plus = grid + up / b_minus - down / b_plus
    l_minus = grid + up / b_plus - down / b_minus
    i, j = int(np.argmin(l_plus)), int(np.argmax(l_minus))
    return float(l_plus[i]), float(l_minus[j]), float(grid[i]), float(grid[j])


def tilted_distributions(dc: DiscreteConditional, b_minus, b_plus):
    """Worst-case pmfs (P+, P-) that attain the sharp bounds."""
    a_plus, a_minus = _levels(b_minus, b_plus)
    p = dc.probs
    cdf = dc.cdf()
    prev = np.concatenate([[0.0], cdf[:-1]])
    p_up = np.empty_like(p)
    p_lo = np.empty_like(p)
    for k in range(p.size):
        if cdf[k] < a_plus:
            p_up[k] = p[k] / b_plus
        elif prev[k] > a_plus:
            p_up[k] = p[k] / b_minus
        else:
            p_up[k] = (a_plus - prev[k]) / b_plus + (cdf[k] - a_plus) / b_minus
        if cdf[k] < a_minus:
            p_lo[k] = p[k] / b_minus
        elif prev[k] > a_minus:
            p_lo[k] = p[k] / b_plus
        else:
            p_lo[k] = (a_minus - prev[k]) / b_minus + (cdf[k] - a_minus) / b_plus
    return p_up, p_lo


def tilted_density_bound(dc: DiscreteConditional, b_minus, b_plus):
    """(mu+, mu-) as means of the explicit worst-case distributions."""
    p_up, p_lo = tilted_distributions(dc, b_minus, b_plus)
    for name, q in (("upper", p_up), ("lower", p_lo)):
        err = abs(q.sum() - 1)
        if err > 1e-8:
            raise OracleError(f"{name} tilted distribution does not normalize (error {err:.3g})")
    return float(dc.support @ p_up), float(dc.support @ p_lo)


def normal_nuisances(m, sigma, b_minus, b_plus) -> dict:
    """Cut-offs and partial moments of N(m, sigma^2) at the tail levels."""
    m = np.asarray(m, float)
    bm = np.broadcast_to(np.asarray(b_minus, float), m.shape)
    bp = np.broadcast_to(np.asarray(b_plus, float), m.shape)
    gap = np.where(bp - bm < 1e-12, 1.0, bp - bm)
    a_up = np.where(bp - bm < 1e-12, 0.5, (1 - bm) * bp / gap)
    a_lo = np.where(bp - bm < 1e-12, 0.5, (bp - 1) * bm / gap)
    out = {"mean": m.copy()}
    for sign, a in (("plus", a_up), ("minus", a_lo)):
        c = norm.ppf(np.clip(a, 1e-15, 1 - 1e-15))
        out["q_" + sign] = m + sigma * c
        out["gu_" + sign] = sigma * (norm.pdf(c) - c * norm.sf(c))
        out["gl_" + sign] = sigma * (c * norm.cdf(c) + norm.pdf(c))
    return out


def normal_bounds(m, sigma, b_minus, b_plus):
    """Sharp (mu-, mu+) for a N(m, sigma^2) outcome; one-sided bounds give the mean."""
    m = np.asarray(m, float)
    bm = np.broadcast_to(np.asarray(b_minus, float), m.shape)
    bp = np.broadcast_to(np.asarray(b_plus, float), m.shape)
    nu = normal_nuisances(m, sigma, bm, bp)
    hi = nu["q_plus"] + nu["gu_plus"] / bm - nu["gl_plus"] / bp
    lo = nu["q_minus"] + nu["gu_minus"] / bp - nu["gl_minus"] / bm
    flat = (bm >= 1 - 1e-12) | (bp <= 1 + 1e-12)
    return np.where(flat, m, lo), np.where(flat, m, hi)


def finite_population_truth(data: Dataset, config: DgpConfig, t, z, x_grid=None, contrast=None) -> dict:
    """Analytic APO over the realized covariates, CAPO on a grid, and effects."""
    out = {"psi": float(np.mean(outcome_mean(t, z, data.x, config)))}
    if x_grid is not None:
        xg = np.asarray(x_grid, float).reshape(len(x_grid), -1)
        out["mu"] = outcome_mean(t, z, xg, config)
    if contrast is not None:
        tp, zp = contrast
        out["effects"] = true_effects(config, t, z, tp, zp)
    return out


def _exposure_members(g: Graph, node: int, spec: ExposureSpec):
    if spec.kind == "khop_mean":
        reach = khop_matrix(g, spec.radius)
        return reach.indices[reach.indptr[node]:reach.indptr[node + 1]]
    return g.neighbors(node)


def enumerate_exposure_distribution(g: Graph, node: int, unit_probs, spec: ExposureSpec) -> dict:
    """Exact pmf of the node's exposure by listing every treatment pattern."""
    members = np.asarray(_exposure_members(g, node, spec))
    n = members.size
    if n > MAX_ENUM_DEGREE:
        raise OracleError(f"node {node} has {n} exposure members; enumeration limit is {MAX_ENUM_DEGREE}")
    if n == 0:
        raise OracleError(f"node {node} is isolated")
    probs = np.asarray(unit_probs, float)[members]
    patterns = (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
    weight = np.prod(np.where(patterns == 1, probs, 1 - probs), axis=1)
    if spec.kind == "weighted_mean" and spec.weights is not None:
        start = g.indptr[node]
        z = patterns @ spec.weights[start:start + n]
    else:
        z = patterns.sum(axis=1) / n
        if spec.kind == "threshold":
            z = (z >= spec.c - 1e-12).astype(float)
    out = {}
    for value, w in zip(np.round(z, 12), weight):
        out[float(value)] = out.get(float(value), 0.0) + float(w)
    return out


def oracle_nuisance_values(data: Dataset, g: Graph, config: DgpConfig, spec: ExposureSpec, misspec,
                           t: int, z: float, count_pmfs=None):
    """True nuisances for target (t, z) when Y | T=t, Z=z, X is N(m(t, z, x), sigma^2).

    This holds exactly at z = 1 for the threshold scenario (the assumed
    level is stricter than the true one) and whenever the mapping is
    correctly specified.
    """
    from .learners import NuisanceValues, count_pmfs as _pmfs, exposure_pmf_at, exposure_sets
    from .sensitivity import node_ratio_bounds

    p = true_propensity(data.x, config.beta)
    sets = exposure_sets(g, spec)
    pmfs = count_pmfs if count_pmfs is not None else _pmfs(sets, p)
    sizes = np.array([len(s) for s in sets])
    bm, bp, att = node_ratio_bounds(misspec, z, sizes, pmfs, data.x)
    m = outcome_mean(t, z, data.x, config)
    nu = normal_nuisances(m, config.noise_sd, np.where(att, bm, 1.0), np.where(att, bp, 1.0))
    return NuisanceValues(t=t, z=z, pi_t=p if t == 1 else 1 - p, pi_g=exposure_pmf_at(spec, z, pmfs),
                          b_minus=bm, b_plus=bp, active=att, fold=np.zeros(data.n, dtype=int), **nu)
