"""Sensitivity models: bounds on the exposure-propensity ratio and tail levels.

A misspecification model yields, for every node and exposure level ``z``,
numbers ``b_minus <= 1 <= b_plus`` bounding how much the true exposure
propensity may differ from the assumed one. The quantile levels at which
the worst-case outcome distribution switches weights follow from them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .netgraph import Graph

TOL = 1e-9
B_FLOOR = 1e-6
MODEL_KINDS = ("weighted_mean", "threshold", "msm")
READINGS = ("cumulative", "literal")


class SensitivityError(ValueError):
    pass


class PositivityError(SensitivityError):
    """The assumed exposure level has zero (or full) probability."""


@dataclass(frozen=True)
class MsmTable:
    """Per-(z, x-bin) ratio bounds; bins split the first covariate."""

    z_values: np.ndarray
    x_edges: np.ndarray
    b_minus: np.ndarray  # shape (len(z_values), len(x_edges) - 1)
    b_plus: np.ndarray

    def lookup(self, z, x):
        x0 = np.atleast_2d(np.asarray(x, dtype=float))[:, 0]
        zi = np.abs(self.z_values[:, None] - np.atleast_1d(z)[None, :]).argmin(axis=0)
        xi = np.clip(np.searchsorted(self.x_edges, x0, side="right") - 1, 0, len(self.x_edges) - 2)
        return self.b_minus[zi, xi], self.b_plus[zi, xi]


@dataclass(frozen=True)
class MisspecModel:
    """Declared misspecification of the exposure mapping.

    ``factor`` scales the slack: eps -> factor * eps for the weighted-mean
    and threshold models, and gamma -> gamma ** factor for the marginal
    sensitivity (msm) model, so factor 0 always gives the identity model.
    """

    kind: str
    eps: float = 0.0
    c: float = 0.5
    gamma_minus: float = 1.0
    gamma_plus: float = 1.0
    factor: float = 1.0
    reading: str = "cumulative"
    table: Optional[MsmTable] = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise SensitivityError(f"unknown model kind {self.kind!r}")
        if self.factor < 0:
            raise SensitivityError(f"factor must be nonnegative, got {self.factor}")
        if self.reading not in READINGS:
            raise SensitivityError(f"unknown reading {self.reading!r}; expected one of {READINGS}")
        if self.eps < 0:
            raise SensitivityError(f"eps must be nonnegative, got {self.eps}")
        if self.kind == "threshold":
            if not 0 < self.c < 1:
                raise SensitivityError(f"threshold level must lie in (0, 1), got {self.c}")
            if self.eps > min(self.c, 1 - self.c) + TOL:
                raise SensitivityError(f"threshold slack {self.eps} exceeds min(c, 1-c)")
        if self.kind == "msm":
            _check_gammas(self.gamma_minus, self.gamma_plus)

    def scaled(self, factor: float) -> "MisspecModel":
        return replace(self, factor=factor)

    @property
    def effective_eps(self) -> float:
        eps = self.eps * self.factor
        if self.kind == "threshold":
            eps = min(eps, self.c, 1 - self.c)
        return eps

    @property
    def effective_gammas(self) -> tuple:
        return self.gamma_minus ** self.factor, self.gamma_plus ** self.factor

    def describe(self) -> str:
        if self.kind == "msm":
            return f"msm(gamma-={self.gamma_minus:g}, gamma+={self.gamma_plus:g})"
        if self.kind == "threshold":
            return f"threshold(c={self.c:g}, eps={self.eps:g})"
        return f"weighted_mean(eps={self.eps:g}, reading={self.reading})"


def _check_gammas(gm, gp):
    if not (0 < gm <= 1 <= gp < math.inf):
        raise SensitivityError(f"need 0 < gamma_minus <= 1 <= gamma_plus < inf, got ({gm}, {gp})")


@dataclass(frozen=True)
class RatioBounds:
    """Ratio bounds on an exposure grid; ``z is None`` means constant."""

    z: Optional[np.ndarray]
    lower: np.ndarray
    upper: np.ndarray

    def _index(self, z):
        if self.z is None:
            return 0
        hit = np.flatnonzero(np.abs(self.z - z) <= TOL)
        if hit.size == 0:
            raise SensitivityError(f"exposure level {z} not in the support grid")
        return int(hit[0])

    def b_minus(self, z, x=None) -> float:
        return float(np.atleast_1d(self.lower)[self._index(z)])

    def b_plus(self, z, x=None) -> float:
        return float(np.atleast_1d(self.upper)[self._index(z)])


@dataclass(frozen=True)
class TailLevel:
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray


def poisson_binomial_pmf(probs) -> np.ndarray:
    """Exact pmf of a sum of independent Bernoulli(probs) variables."""
    probs = np.asarray(probs, dtype=float).ravel()
    if probs.size == 0:
        raise SensitivityError("need at least one success probability")
    if np.any((probs < 0) | (probs > 1)):
        raise SensitivityError("probabilities must lie in [0, 1]")
    pmf = np.zeros(probs.size + 1)
    pmf[0] = 1.0
    for k, p in enumerate(probs, start=1):
        pmf[1:k + 1] = pmf[1:k + 1] * (1 - p) + pmf[:k] * p
        pmf[0] *= 1 - p
    return pmf


def neighbor_count_pmfs(g: Graph, unit_probs) -> list:
    """Per-node pmf of the treated-neighbor count given unit propensities."""
    unit_probs = np.asarray(unit_probs, dtype=float)
    return [poisson_binomial_pmf(unit_probs[g.neighbors(i)]) if g.degree_cache[i]
            else np.ones(1) for i in range(g.node_count)]


def _ceil(v):
    return math.ceil(v - TOL)


def _floor(v):
    return math.floor(v + TOL)


def _interval_prob(cdf, lo, hi):
    """P(lo <= N <= hi) for integer endpoints, given cdf over 0..n."""
    n = len(cdf) - 1
    lo, hi = max(lo, 0), min(hi, n)
    if lo > hi:
        return 0.0
    return float(cdf[hi] - (cdf[lo - 1] if lo > 0 else 0.0))


def _clamp(bm, bp):
    return min(max(bm, B_FLOOR), 1.0), max(bp, 1.0)


def weighted_mean_level_bounds(eps, n, k, cdf, reading="cumulative", clamp=True):
    """(b_minus, b_plus) at z = k/n for the weighted-mean slack model."""
    en = eps * n
    s_range = [0] if reading == "cumulative" else range(k + 1)
    lows, highs = [], []
    for j in s_range:
        den = _interval_prob(cdf, j, k)
        if den <= 0:
            continue
        lo_hi = _floor(k / (1 + en))
        lo_lo = _ceil(j / (1 - en)) if en < 1 else (0 if j == 0 else n + 1)
        lows.append(_interval_prob(cdf, lo_lo, lo_hi) / den)
        up_hi = _floor(k / (1 - en)) if en < 1 else n
        up_lo = _ceil(j / (1 + en))
        highs.append(_interval_prob(cdf, up_lo, up_hi) / den)
    if not lows:
        raise PositivityError(f"P(N <= {k}) is zero at z={k}/{n}")
    bm, bp = min(lows), max(highs)
    return _clamp(bm, bp) if clamp else (bm, bp)


def ratio_bounds_weighted_mean(eps, n, count_pmf, reading="cumulative") -> RatioBounds:
    """Ratio bounds on the grid {0, 1/n, ..., 1} for weight slack ``eps``.

    Interval endpoints are rounded to attainable counts (ceil for lower,
    floor for upper). ``reading='literal'`` takes the inf/sup over every
    s <= z; the default ``'cumulative'`` uses the s = 0 member only, which
    stays informative when the single-atom candidates are empty.
    """
    if not 0 <= eps <= 1.0 / n + TOL:
        raise SensitivityError(f"weight slack {eps} outside [0, 1/n] for n={n}")
    pmf = np.asarray(count_pmf, dtype=float)
    if pmf.size != n + 1:
        raise SensitivityError(f"count pmf must have {n + 1} entries")
    cdf = np.cumsum(pmf)
    lower, upper = np.empty(n + 1), np.empty(n + 1)
    for k in range(n + 1):
        lower[k], upper[k] = weighted_mean_level_bounds(eps, n, k, cdf, reading)
    return RatioBounds(np.arange(n + 1) / n, lower, upper)


def threshold_level_bounds(eps, c, n, pmf, clamp=True):
    """((b_minus, b_plus) at z=0, (b_minus, b_plus) at z=1)."""
    surv = np.concatenate([np.cumsum(pmf[::-1])[::-1], [0.0]])  # surv[k] = P(N >= k)

    def s(level):
        return float(surv[min(max(_ceil(n * level), 0), n + 1)])

    p1 = s(c)
    if p1 <= 1e-15 or p1 >= 1 - 1e-15:
        raise PositivityError(f"P(N >= n*c) = {p1:.3g} leaves no overlap (n={n}, c={c})")
    hi, lo = s(c + eps), s(c - eps)
    one = (hi / p1, lo / p1)
    zero = ((1 - lo) / (1 - p1), (1 - hi) / (1 - p1))
    if clamp:
        one, zero = _clamp(*one), _clamp(*zero)
    return zero, one


def ratio_bounds_threshold(eps, c, n, count_pmf) -> RatioBounds:
    """Ratio bounds at z in {0, 1} when the true cut-off lies in [c-eps, c+eps]."""
    if not 0 <= eps <= min(c, 1 - c) + TOL:
        raise SensitivityError(f"threshold slack {eps} outside [0, min(c, 1-c)]")
    pmf = np.asarray(count_pmf, dtype=float)
    if pmf.size != n + 1:
        raise SensitivityError(f"count pmf must have {n + 1} entries")
    zero, one = threshold_level_bounds(eps, c, n, pmf)
    return RatioBounds(np.array([0.0, 1.0]), np.array([zero[0], one[0]]),
                       np.array([zero[1], one[1]]))


def ratio_bounds_msm(gamma_minus, gamma_plus) -> RatioBounds:
    _check_gammas(gamma_minus, gamma_plus)
    return RatioBounds(None, np.array([float(gamma_minus)]), np.array([float(gamma_plus)]))


def alpha_levels(b_minus, b_plus) -> TailLevel:
    """Quantile levels at which the worst-case reweighting switches."""
    bm = np.asarray(b_minus, dtype=float)
    bp = np.asarray(b_plus, dtype=float)
    gap = bp - bm
    degenerate = np.abs(gap) < 1e-12
    safe = np.where(degenerate, 1.0, gap)
    a_plus = np.where(degenerate, 0.5, (1 - bm) * bp / safe)
    a_minus = np.where(degenerate, 0.5, (1 - bp) * bm / -safe)
    return TailLevel(np.clip(a_plus, 0.0, 1.0), np.clip(a_minus, 0.0, 1.0))


def node_ratio_bounds(model: MisspecModel, z: float, degrees, count_pmfs, x=None):
    """Ratio bounds at level ``z`` for every node.

    Returns ``(b_minus, b_plus, attainable)``; nodes for which ``z`` is not
    a possible exposure value get NaN bounds and ``attainable=False``.
    """
    degrees = np.asarray(degrees)
    n_nodes = degrees.size
    bm = np.full(n_nodes, np.nan)
    bp = np.full(n_nodes, np.nan)
    if model.kind == "msm":
        if model.table is not None:
            tm, tp = model.table.lookup(np.full(n_nodes, z), x)
            bm, bp = tm ** model.factor, tp ** model.factor
        else:
            gm, gp = model.effective_gammas
            bm[:], bp[:] = gm, gp
        return bm, bp, np.ones(n_nodes, dtype=bool)
    if model.kind == "threshold":
        if not (abs(z) <= TOL or abs(z - 1) <= TOL):
            raise SensitivityError(f"threshold exposure takes values 0 or 1, got {z}")
        eps = model.effective_eps
        for i in range(n_nodes):
            zero, one = threshold_level_bounds(eps, model.c, int(degrees[i]), count_pmfs[i])
            bm[i], bp[i] = one if z > 0.5 else zero
        return bm, bp, np.ones(n_nodes, dtype=bool)
    attainable = np.zeros(n_nodes, dtype=bool)
    for i in range(n_nodes):
        n = int(degrees[i])
        k = z * n
        if abs(k - round(k)) > 1e-7:
            continue
        attainable[i] = True
        eps = min(model.effective_eps, 1.0 / n)
        cdf = np.cumsum(count_pmfs[i])
        bm[i], bp[i] = weighted_mean_level_bounds(eps, n, int(round(k)), cdf, model.reading)
    return bm, bp, attainable


def load_msm_table(path, x_edges=None) -> MsmTable:
    """Read a CSV with columns z, x_bin, b_minus, b_plus."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SensitivityError(f"{path}: empty msm table")
    zs = sorted({float(r["z"]) for r in rows})
    nbins = max(int(r["x_bin"]) for r in rows) + 1
    edges = np.linspace(-1, 1, nbins + 1) if x_edges is None else np.asarray(x_edges, float)
    bm = np.full((len(zs), nbins), np.nan)
    bp = np.full((len(zs), nbins), np.nan)
    for r in rows:
        zi, xi = zs.index(float(r["z"])), int(r["x_bin"])
        _check_gammas(float(r["b_minus"]), float(r["b_plus"]))
        bm[zi, xi], bp[zi, xi] = float(r["b_minus"]), float(r["b_plus"])
    if np.isnan(bm).any():
        raise SensitivityError(f"{path}: table does not cover every (z, x_bin) pair")
    return MsmTable(np.array(zs), edges, bm, bp)
