"""Nuisance learners and K-fold cross-fitting.

Every node's nuisance values come from models trained on the other folds.
Outcome nuisances are served by conditional-distribution models that
return the cut-off quantile together with its two partial moments at a
row-specific quantile level.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from sklearn.ensemble import HistGradientBoostingClassifier, HistGradientBoostingRegressor
from sklearn.linear_model import LogisticRegression, Ridge
from sklearn.mixture import GaussianMixture
from sklearn.preprocessing import PolynomialFeatures

from .exposure import ExposureSpec
from .netgraph import Graph, khop_matrix
from .sensitivity import (MisspecModel, PositivityError, alpha_levels, node_ratio_bounds,
                          poisson_binomial_pmf)

EPS_CLIP = 0.01
LEARNER_KINDS = ("gbt", "binned", "poly")


class LearnerError(ValueError):
    pass


class DegenerateFitError(LearnerError):
    pass


class FoldFitError(RuntimeError):
    def __init__(self, fold, err):
        self.fold = fold
        super().__init__(f"fold {fold}: {err}")


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "gbt"
    depth: int = 3
    trees: int = 100
    learning_rate: float = 0.1
    bins: int = 10
    min_leaf: int = 20
    levels: int = 5
    degree: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise LearnerError(f"unknown learner kind {self.kind!r}; expected one of {LEARNER_KINDS}")
        if self.trees < 1 or self.depth < 1 or self.bins < 1 or self.levels < 1:
            raise LearnerError("trees, depth, bins and levels must be positive")


@dataclass(frozen=True)
class FoldPlan:
    assignments: np.ndarray
    K: int
    seed: int

    def test(self, k) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)

    def train(self, k) -> np.ndarray:
        return np.flatnonzero(self.assignments != k)


def make_folds(n: int, K: int, seed=0) -> FoldPlan:
    """Balanced random partition of ``range(n)`` into ``K`` folds."""
    if not 2 <= K <= n:
        raise LearnerError(f"need 2 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    return FoldPlan(rng.permutation(np.arange(n) % K), K, seed)


def _as2d(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def _hgb_kwargs(spec: LearnerSpec):
    return dict(max_depth=spec.depth, max_iter=spec.trees, learning_rate=spec.learning_rate,
                min_samples_leaf=spec.min_leaf, early_stopping=False, random_state=spec.seed)


# ---------------------------------------------------------------- binned models

def _bin_edges(x0, weights, bins, min_leaf):
    x0 = x0[weights > 0]
    nb = int(max(1, min(bins, x0.size // max(min_leaf, 1))))
    edges = np.unique(np.quantile(x0, np.linspace(0, 1, nb + 1))) if x0.size else np.array([0.0])
    return edges[1:-1]  # interior cut points


def _bin_index(x0, cuts):
    return np.searchsorted(cuts, x0, side="right")


def _check_d1(x, what):
    if x.shape[1] != 1:
        raise LearnerError(f"binned {what} supports a single covariate, got d={x.shape[1]}")


class BinnedRegressor:
    """Weighted bin means on quantile bins of a single covariate."""

    def __init__(self, bins=10, min_leaf=20):
        self.bins, self.min_leaf = bins, min_leaf

    def fit(self, x, y, sample_weight=None):
        x = _as2d(x)
        _check_d1(x, "regressor")
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        self.cuts_ = _bin_edges(x[:, 0], w, self.bins, self.min_leaf)
        b = _bin_index(x[:, 0], self.cuts_)
        nb = self.cuts_.size + 1
        sw = np.bincount(b, weights=w, minlength=nb)
        swy = np.bincount(b, weights=w * np.asarray(y, float), minlength=nb)
        overall = swy.sum() / sw.sum()
        self.means_ = np.where(sw > 0, swy / np.where(sw > 0, sw, 1.0), overall)
        return self

    def predict(self, x):
        return self.means_[_bin_index(_as2d(x)[:, 0], self.cuts_)]


class PolyRegressor:
    """Lightly ridged least squares on polynomial features."""

    def __init__(self, degree=2, penalty=1e-3):
        self.features = PolynomialFeatures(degree, include_bias=False)
        self.model = Ridge(alpha=penalty)

    def fit(self, x, y, sample_weight=None):
        self.model.fit(self.features.fit_transform(_as2d(x)), y, sample_weight=sample_weight)
        return self

    def predict(self, x):
        return self.model.predict(self.features.transform(_as2d(x)))


class BinnedConditional:
    """Per-bin weighted empirical distribution of the outcome.

    Quantiles and partial moments are exact functionals of each bin's
    empirical distribution, so any quantile level can be served.
    """

    def __init__(self, bins=10, min_leaf=20):
        self.bins, self.min_leaf = bins, min_leaf

    def fit(self, x, y, sample_weight=None):
        x = _as2d(x)
        _check_d1(x, "conditional model")
        y = np.asarray(y, float)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        keep = w > 0
        if not keep.any():
            raise PositivityError("no training rows with positive weight")
        x, y, w = x[keep], y[keep], w[keep]
        self.cuts_ = _bin_edges(x[:, 0], w, self.bins, self.min_leaf)
        b = _bin_index(x[:, 0], self.cuts_)
        self.tables_ = []
        for k in range(self.cuts_.size + 1):
            m = b == k
            if not m.any():  # fall back to pooled rows
                m = np.ones_like(m)
            order = np.argsort(y[m], kind="stable")
            ys, ws = y[m][order], w[m][order]
            self.tables_.append((ys, np.cumsum(ws), np.cumsum(ws * ys)))
        return self

    def _groups(self, x):
        b = _bin_index(_as2d(x)[:, 0], self.cuts_)
        for k, tab in enumerate(self.tables_):
            idx = np.flatnonzero(b == k)
            if idx.size:
                yield idx, tab

    def quantile(self, x, alpha):
        alpha = np.broadcast_to(np.asarray(alpha, float), (len(_as2d(x)),))
        out = np.empty(len(alpha))
        for idx, (ys, cw, _) in self._groups(x):
            j = np.searchsorted(cw / cw[-1], alpha[idx] - 1e-12, side="left")
            out[idx] = ys[np.clip(j, 0, ys.size - 1)]
        return out

    def partial_moments(self, x, q):
        q = np.broadcast_to(np.asarray(q, float), (len(_as2d(x)),))
        gu, gl = np.empty(len(q)), np.empty(len(q))
        for idx, (ys, cw, cwy) in self._groups(x):
            j = np.searchsorted(ys, q[idx], side="right")
            w_below = np.where(j > 0, cw[np.maximum(j - 1, 0)], 0.0)
            wy_below = np.where(j > 0, cwy[np.maximum(j - 1, 0)], 0.0)
            total, total_y = cw[-1], cwy[-1]
            gu[idx] = ((total_y - wy_below) - q[idx] * (total - w_below)) / total
            gl[idx] = (q[idx] * w_below - wy_below) / total
        return np.maximum(gu, 0.0), np.maximum(gl, 0.0)

    def mean(self, x):
        out = np.empty(len(_as2d(x)))
        for idx, (_, cw, cwy) in self._groups(x):
            out[idx] = cwy[-1] / cw[-1]
        return out

    def cutoff_moments(self, x, alpha):
        q = self.quantile(x, alpha)
        gu, gl = self.partial_moments(x, q)
        return q, gu, gl


# ------------------------------------------------------------------ boosted models

def _level_grid(alphas, levels):
    alphas = np.asarray(alphas, float)
    alphas = alphas[np.isfinite(alphas)]
    if alphas.size == 0:
        return np.array([0.5])
    grid = np.quantile(alphas, np.linspace(0, 1, levels))
    return np.unique(np.clip(np.round(grid, 4), 0.005, 0.995))


class GbtConditional:
    """Pinball-loss boosted quantiles on a level grid plus tail regressions.

    Quantiles at arbitrary levels are linear interpolations across the grid
    (after sorting each row, which repairs crossing). The partial moments
    are regressions of (Y - Q)_+ and (Q - Y)_+ on the covariates and the
    level, trained at each training row's own level.
    """

    def __init__(self, spec: LearnerSpec):
        self.spec = spec

    def fit(self, x, y, sample_weight=None, alphas=()):
        x = _as2d(x)
        y = np.asarray(y, float)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        keep = w > 0
        if not keep.any():
            raise PositivityError("no training rows with positive weight")
        self.x_, self.y_, self.w_ = x[keep], y[keep], w[keep]
        kw = _hgb_kwargs(self.spec)
        self.mean_model_ = HistGradientBoostingRegressor(**kw).fit(self.x_, self.y_, sample_weight=self.w_)
        self.levels_ = _level_grid(alphas, self.spec.levels)
        self.q_models_ = [HistGradientBoostingRegressor(loss="quantile", quantile=float(a), **kw)
                          .fit(self.x_, self.y_, sample_weight=self.w_) for a in self.levels_]
        self.tail_models_ = None
        return self

    def quantile(self, x, alpha):
        x = _as2d(x)
        alpha = np.broadcast_to(np.asarray(alpha, float), (len(x),))
        preds = np.sort(np.column_stack([m.predict(x) for m in self.q_models_]), axis=1)
        if preds.shape[1] == 1:
            return preds[:, 0]
        lv = self.levels_
        a = np.clip(alpha, lv[0], lv[-1])
        j = np.clip(np.searchsorted(lv, a, side="right") - 1, 0, lv.size - 2)
        frac = (a - lv[j]) / (lv[j + 1] - lv[j])
        rows = np.arange(len(x))
        return preds[rows, j] * (1 - frac) + preds[rows, j + 1] * frac

    def fit_tails(self, alphas_by_row):
        """Train tail regressions; ``alphas_by_row`` lists per-training-row level arrays."""
        feats, ru, rl, ww = [], [], [], []
        for alpha in alphas_by_row:
            alpha = np.asarray(alpha, float)
            ok = np.isfinite(alpha)
            if not ok.any():
                continue
            x, y, a = self.x_[ok], self.y_[ok], alpha[ok]
            q = self.quantile(x, a)
            feats.append(np.column_stack([x, a]))
            ru.append(np.maximum(y - q, 0.0))
            rl.append(np.maximum(q - y, 0.0))
            ww.append(self.w_[ok])
        if not feats:
            return self
        f, w = np.vstack(feats), np.concatenate(ww)
        kw = _hgb_kwargs(self.spec)
        self.tail_models_ = (HistGradientBoostingRegressor(**kw).fit(f, np.concatenate(ru), sample_weight=w),
                             HistGradientBoostingRegressor(**kw).fit(f, np.concatenate(rl), sample_weight=w))
        return self

    def mean(self, x):
        return self.mean_model_.predict(_as2d(x))

    def cutoff_moments(self, x, alpha):
        x = _as2d(x)
        alpha = np.broadcast_to(np.asarray(alpha, float), (len(x),))
        q = self.quantile(x, alpha)
        if self.tail_models_ is None:
            raise LearnerError("tail regressions are not fitted")
        f = np.column_stack([x, alpha])
        return (q, np.maximum(self.tail_models_[0].predict(f), 0.0),
                np.maximum(self.tail_models_[1].predict(f), 0.0))


def make_conditional(spec: LearnerSpec):
    if spec.kind == "poly":
        raise LearnerError("poly learners serve mean regressions only")
    if spec.kind == "binned":
        return BinnedConditional(spec.bins, spec.min_leaf)
    return GbtConditional(spec)


def make_regressor(spec: LearnerSpec):
    if spec.kind == "binned":
        return BinnedRegressor(spec.bins, spec.min_leaf)
    if spec.kind == "poly":
        return PolyRegressor(spec.degree)
    return HistGradientBoostingRegressor(**_hgb_kwargs(spec))


# ------------------------------------------------------------ public fit helpers

class _PolyClassifier:
    def __init__(self, model, degree):
        self.model, self.features = model, PolynomialFeatures(degree, include_bias=False)

    def predict_proba(self, x):
        return self.model.predict_proba(self.features.fit_transform(x))


class UnitPropensity:
    """Serves clipped P(T=1 | x)."""

    def __init__(self, model, clip):
        self.model, self.clip = model, clip

    def predict(self, x):
        x = _as2d(x)
        p = self.model.predict_proba(x)[:, 1] if hasattr(self.model, "predict_proba") \
            else self.model.predict(x)
        return np.clip(p, self.clip, 1 - self.clip)


def fit_unit_propensity(x, t, spec: LearnerSpec = LearnerSpec(), clip=EPS_CLIP) -> UnitPropensity:
    t = np.asarray(t)
    if np.unique(t).size < 2:
        raise DegenerateFitError("unit propensity needs both treated and control rows")
    x = _as2d(x)
    if spec.kind == "binned":
        model = BinnedRegressor(spec.bins, spec.min_leaf).fit(x, t.astype(float))
    elif spec.kind == "poly":
        model = LogisticRegression(C=1e3, max_iter=1000).fit(
            PolynomialFeatures(spec.degree, include_bias=False).fit_transform(x), t)
        model = _PolyClassifier(model, spec.degree)
    else:
        model = HistGradientBoostingClassifier(**_hgb_kwargs(spec)).fit(x, t)
    return UnitPropensity(model, clip)


def fit_quantile(x, y, alpha, spec: LearnerSpec = LearnerSpec(kind="binned"), sample_weight=None):
    """Quantile regression at level ``alpha``; returns ``x -> Q(x)``."""
    if not (0 < np.min(alpha) and np.max(alpha) < 1):
        raise LearnerError("quantile level must lie in (0, 1)")
    if len(y) == 0:
        raise PositivityError("empty subset for quantile fit")
    model = make_conditional(spec)
    if isinstance(model, GbtConditional):
        model.fit(x, y, sample_weight, alphas=np.atleast_1d(alpha))
    else:
        model.fit(x, y, sample_weight)
    return lambda xq: model.quantile(xq, alpha)


def fit_tail_moments(x, y, q_hat, spec: LearnerSpec = LearnerSpec(kind="binned"), sample_weight=None):
    """Regress (Y - Q)_+ and (Q - Y)_+ on x; returns two clamped predictors."""
    if len(y) == 0:
        raise PositivityError("empty subset for tail-moment fit")
    y = np.asarray(y, float)
    q_hat = np.broadcast_to(np.asarray(q_hat, float), y.shape)
    up = make_regressor(spec).fit(_as2d(x), np.maximum(y - q_hat, 0), sample_weight=sample_weight)
    lo = make_regressor(spec).fit(_as2d(x), np.maximum(q_hat - y, 0), sample_weight=sample_weight)
    return (lambda xq: np.maximum(up.predict(_as2d(xq)), 0.0),
            lambda xq: np.maximum(lo.predict(_as2d(xq)), 0.0))


def exposure_sets(g: Graph, spec: ExposureSpec) -> list:
    """Nodes whose treatments enter each node's assumed exposure."""
    if spec.kind == "khop_mean":
        reach = khop_matrix(g, spec.radius)
        return [reach.indices[reach.indptr[i]:reach.indptr[i + 1]] for i in range(g.node_count)]
    return [g.neighbors(i) for i in range(g.node_count)]


def count_pmfs(sets, unit_probs) -> list:
    return [poisson_binomial_pmf(unit_probs[s]) if len(s) else np.ones(1) for s in sets]


def exposure_pmf_at(spec: ExposureSpec, z: float, pmfs) -> np.ndarray:
    """P(g(T_N) = z | covariates) per node from treated-count pmfs."""
    out = np.zeros(len(pmfs))
    for i, pmf in enumerate(pmfs):
        n = pmf.size - 1
        if spec.kind == "threshold":
            kc = int(np.ceil(n * spec.c - 1e-9))
            p1 = float(pmf[kc:].sum())
            out[i] = p1 if z > 0.5 else 1 - p1
        else:
            k = z * n
            if n and abs(k - round(k)) <= 1e-7:
                out[i] = pmf[int(round(k))]
    return out


class DirectExposureModel:
    """Exposure propensity learned from (z, x) samples.

    Discrete: a boosted classifier over the observed levels. Continuous: a
    boosted mean plus a Gaussian mixture for the residual density.
    """

    def __init__(self, spec: LearnerSpec, support_kind="discrete", components=3):
        self.spec, self.support_kind, self.components = spec, support_kind, components

    def fit(self, x, z):
        x, z = _as2d(x), np.asarray(z, float)
        if self.support_kind == "discrete":
            self.levels_, labels = np.unique(np.round(z, 9), return_inverse=True)
            if self.levels_.size < 2:
                raise DegenerateFitError("direct exposure model needs at least two levels")
            self.model_ = HistGradientBoostingClassifier(**_hgb_kwargs(self.spec)).fit(x, labels)
        else:
            self.model_ = HistGradientBoostingRegressor(**_hgb_kwargs(self.spec)).fit(x, z)
            resid = (z - self.model_.predict(x)).reshape(-1, 1)
            self.gmm_ = GaussianMixture(min(self.components, len(z)), random_state=self.spec.seed).fit(resid)
        return self

    def pmf(self, z, x):
        if self.support_kind != "discrete":
            raise LearnerError("continuous exposure fit does not serve a pmf; use density()")
        x = _as2d(x)
        proba = self.model_.predict_proba(x)
        z = np.broadcast_to(np.asarray(z, float), (len(x),))
        j = np.searchsorted(self.levels_, np.round(z, 9))
        hit = (j < self.levels_.size) & (self.levels_[np.minimum(j, self.levels_.size - 1)] == np.round(z, 9))
        return np.where(hit, proba[np.arange(len(x)), np.minimum(j, proba.shape[1] - 1)], 0.0)

    def density(self, z, x):
        if self.support_kind != "continuous":
            raise LearnerError("discrete exposure fit does not serve a density; use pmf()")
        x = _as2d(x)
        resid = np.asarray(z, float) - self.model_.predict(x)
        return np.exp(self.gmm_.score_samples(resid.reshape(-1, 1)))


def fit_exposure_propensity(mode: str, *, spec: ExposureSpec = None, g: Graph = None,
                            unit_probs=None, x=None, z=None, learner: LearnerSpec = LearnerSpec(),
                            support_kind="discrete") -> Callable:
    """Return ``(z, nodes_or_x) -> propensity``.

    ``analytic`` pushes the Poisson-binomial treated count through the
    mapping and is evaluated per node; ``direct`` learns from samples.
    """
    if mode == "analytic":
        if spec is None or g is None or unit_probs is None:
            raise LearnerError("analytic mode needs spec, graph and unit propensities")
        pmfs = count_pmfs(exposure_sets(g, spec), np.asarray(unit_probs, float))
        return lambda zz, nodes=None: (exposure_pmf_at(spec, zz, pmfs) if nodes is None
                                       else exposure_pmf_at(spec, zz, [pmfs[i] for i in np.atleast_1d(nodes)]))
    if mode == "direct":
        model = DirectExposureModel(learner, support_kind).fit(x, z)
        return model.pmf if support_kind == "discrete" else model.density
    raise LearnerError(f"unknown exposure propensity mode {mode!r}")


# --------------------------------------------------------------- cross-fitting

@dataclass
class NuisanceSet:
    """Models trained on the complement of one fold."""

    fold: int
    trained_on: np.ndarray
    unit_propensity: Optional[UnitPropensity]
    outcome_model: object = None


@dataclass
class NuisanceValues:
    """Cross-fitted nuisance values for one target (t, z), one entry per node."""

    t: int
    z: float
    pi_t: np.ndarray
    pi_g: np.ndarray
    b_minus: np.ndarray
    b_plus: np.ndarray
    active: np.ndarray
    q_plus: np.ndarray
    gu_plus: np.ndarray
    gl_plus: np.ndarray
    q_minus: np.ndarray
    gu_minus: np.ndarray
    gl_minus: np.ndarray
    mean: np.ndarray
    fold: np.ndarray
    clipped_share: float = 0.0
    sets: list = field(default_factory=list)

    @property
    def collapsed(self) -> np.ndarray:
        return (self.b_minus >= 1 - 1e-12) | (self.b_plus <= 1 + 1e-12)

    def copy(self, **changes) -> "NuisanceValues":
        return replace(self, **changes)


def outcome_nuisances(model, x, alpha_plus, alpha_minus, collapsed):
    """Evaluate cut-offs, tail moments and means for rows of ``x``."""
    n = len(x)
    out = {k: np.zeros(n) for k in ("q_plus", "gu_plus", "gl_plus", "q_minus", "gu_minus", "gl_minus")}
    out["mean"] = model.mean(x)
    live = ~collapsed
    if live.any():
        for sign, a in (("plus", alpha_plus), ("minus", alpha_minus)):
            q, gu, gl = model.cutoff_moments(x[live], a[live])
            out["q_" + sign][live], out["gu_" + sign][live], out["gl_" + sign][live] = q, gu, gl
    return out


def fit_outcome_model(spec: LearnerSpec, x, y, weight, alpha_plus, alpha_minus, collapsed, eval_alphas=()):
    model = make_conditional(spec)
    if isinstance(model, GbtConditional):
        live = ~collapsed
        needed = np.concatenate([alpha_plus[live], alpha_minus[live], *eval_alphas])
        model.fit(x, y, weight, alphas=needed)
        keep = weight > 0
        ap = np.where(collapsed, np.nan, alpha_plus)[keep]
        am = np.where(collapsed, np.nan, alpha_minus)[keep]
        model.fit_tails([ap, am])
    else:
        model.fit(x, y, weight)
    return model


class CrossFitter:
    """Cross-fitted nuisances on a network dataset.

    Unit propensities and treated-count pmfs are fitted once per fold and
    reused for every target and misspecification factor.
    """

    def __init__(self, data, g: Graph, spec: ExposureSpec, K=2, seed=0,
                 propensity: LearnerSpec = LearnerSpec(), outcome: LearnerSpec = LearnerSpec(),
                 clip=EPS_CLIP):
        self.data, self.g, self.spec = data, g, spec
        self.propensity_spec, self.outcome_spec, self.clip = propensity, outcome, clip
        self.folds = make_folds(data.n, K, seed)
        self.sets = exposure_sets(g, spec)
        self.sizes = np.array([len(s) for s in self.sets])
        self._ctx = {}

    def fold_context(self, k):
        if k not in self._ctx:
            tr = self.folds.train(k)
            try:
                prop = fit_unit_propensity(self.data.x[tr], self.data.t[tr], self.propensity_spec, self.clip)
            except Exception as err:  # attach the fold id
                raise FoldFitError(k, err) from err
            p_all = prop.predict(self.data.x)
            self._ctx[k] = (prop, p_all, count_pmfs(self.sets, p_all))
        return self._ctx[k]

    def nuisance_sets(self) -> list:
        return [NuisanceSet(k, self.folds.train(k), self.fold_context(k)[0]) for k in range(self.folds.K)]

    def fit(self, t: int, z: float, misspec: MisspecModel, injected: Optional[dict] = None) -> NuisanceValues:
        data, n = self.data, self.data.n
        arrays = {k: np.full(n, np.nan) for k in
                  ("pi_t", "pi_g", "b_minus", "b_plus", "q_plus", "gu_plus", "gl_plus",
                   "q_minus", "gu_minus", "gl_minus", "mean")}
        active = np.zeros(n, dtype=bool)
        clipped = 0
        match = (data.t == t) & (np.abs(data.z_assumed - z) <= 1e-9)
        for k in range(self.folds.K):
            try:
                prop, p_all, pmfs = self.fold_context(k)
                bm, bp, att = node_ratio_bounds(misspec, z, self.sizes, pmfs, data.x)
                pg_raw = exposure_pmf_at(self.spec, z, pmfs)
                pg = np.maximum(pg_raw, self.clip)
                tail = alpha_levels(np.where(att, bm, 1.0), np.where(att, bp, 1.0))
                collapsed = ~att | (bm >= 1 - 1e-12) | (bp <= 1 + 1e-12)
                tr, te = self.folds.train(k), self.folds.test(k)
                w = (match[tr] & att[tr]).astype(float)
                if w.sum() == 0:
                    raise PositivityError(f"no training rows with T={t}, Z={z:g}")
                model = fit_outcome_model(self.outcome_spec, data.x[tr], data.y[tr], w,
                                          tail.alpha_plus[tr], tail.alpha_minus[tr], collapsed[tr],
                                          eval_alphas=(tail.alpha_plus[te][~collapsed[te]],
                                                       tail.alpha_minus[te][~collapsed[te]]))
                vals = outcome_nuisances(model, data.x[te], tail.alpha_plus[te],
                                         tail.alpha_minus[te], collapsed[te])
            except FoldFitError:
                raise
            except Exception as err:
                raise FoldFitError(k, err) from err
            p = p_all[te]
            arrays["pi_t"][te] = p if t == 1 else 1 - p
            arrays["pi_g"][te] = pg[te]
            arrays["b_minus"][te], arrays["b_plus"][te] = bm[te], bp[te]
            for key, v in vals.items():
                arrays[key][te] = v
            active[te] = att[te]
            clipped += int(np.sum(att[te] & (pg_raw[te] < self.clip)))
        return NuisanceValues(t=t, z=z, active=active, fold=self.folds.assignments.copy(),
                              clipped_share=clipped / max(int(active.sum()), 1), **arrays)


def crossfit_nuisances(data, g: Graph, spec: ExposureSpec, misspec: MisspecModel, K, t, z,
                       learner_specs=None, seed=0, clip=EPS_CLIP):
    """Fit per-fold nuisances for target (t, z); returns (sets, values)."""
    learner_specs = learner_specs or {}
    cf = CrossFitter(data, g, spec, K, seed, learner_specs.get("propensity", LearnerSpec()),
                     learner_specs.get("outcome", LearnerSpec()), clip)
    values = cf.fit(t, z, misspec)
    return cf.nuisance_sets(), values
