"""Sharp bounds, orthogonal pseudo-outcomes and cross-fitted estimates.

Upper CAPO bound:  mu+ = Q+ + gu+/b- - gl+/b+
Lower CAPO bound:  mu- = Q- + gu-/b+ - gl-/b-
with gu = E[(Y - Q)_+ | t, z, x] and gl = E[(Q - Y)_+ | t, z, x].
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .learners import (EPS_CLIP, CrossFitter, LearnerSpec, NuisanceValues, make_folds,
                       make_regressor, outcome_nuisances, fit_outcome_model)
from .sensitivity import MisspecModel, PositivityError, alpha_levels

Z95 = 1.959963984540054
KERNEL_SHAPES = ("epanechnikov", "gaussian", "box")
EFFECT_KINDS = ("direct", "spillover", "overall")


class EstimationError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    shape: str = "epanechnikov"
    bandwidth: float = 0.1

    def __post_init__(self):
        if self.shape not in KERNEL_SHAPES:
            raise EstimationError(f"unknown kernel {self.shape!r}; expected one of {KERNEL_SHAPES}")
        if not self.bandwidth > 0:
            raise EstimationError(f"bandwidth must be positive, got {self.bandwidth}")

    def kernel(self, u):
        u = np.asarray(u, dtype=float)
        if self.shape == "epanechnikov":
            return np.where(np.abs(u) <= 1, 0.75 * (1 - u ** 2), 0.0)
        if self.shape == "box":
            return np.where(np.abs(u) <= 1, 0.5, 0.0)
        return np.exp(-0.5 * u ** 2) / math.sqrt(2 * math.pi)

    def __call__(self, z_obs, z_target):
        h = self.bandwidth
        return self.kernel((np.asarray(z_obs, float) - z_target) / h) / h


def localization_weight(mode: str, z_obs, z_target, kernel: Optional[KernelSpec] = None):
    """1[Z = z] for discrete exposures, K_h(Z - z) for continuous ones."""
    if mode == "discrete":
        return (np.abs(np.asarray(z_obs, float) - z_target) <= 1e-9).astype(float)
    if mode == "continuous":
        if kernel is None:
            raise EstimationError("continuous localization needs a kernel")
        return kernel(z_obs, z_target)
    raise EstimationError(f"unknown localization mode {mode!r}")


def capo_closed_form(q, gamma_u, gamma_l, b_minus, b_plus, sign="upper"):
    """Closed-form sharp bound from the cut-off and its partial moments."""
    if sign == "upper":
        return q + gamma_u / b_minus - gamma_l / b_plus
    if sign == "lower":
        return q + gamma_u / b_plus - gamma_l / b_minus
    raise EstimationError(f"sign must be 'upper' or 'lower', got {sign!r}")


def bounds_from_distribution(support, probs, b_minus, b_plus):
    """(mu-, mu+) for a discrete outcome distribution via the closed form."""
    y = np.asarray(support, float)
    p = np.asarray(probs, float)
    cdf = np.cumsum(p)
    lv = alpha_levels(b_minus, b_plus)
    out = []
    for sign, a in (("lower", float(lv.alpha_minus)), ("upper", float(lv.alpha_plus))):
        q = y[min(np.searchsorted(cdf, a - 1e-12, side="left"), y.size - 1)]
        gu = float(np.sum(p * np.maximum(y - q, 0)))
        gl = float(np.sum(p * np.maximum(q - y, 0)))
        out.append(float(capo_closed_form(q, gu, gl, b_minus, b_plus, sign)))
    return tuple(out)


# ------------------------------------------------------------ pseudo-outcomes

@dataclass
class PseudoOutcomes:
    t: int
    z: float
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    plugin_plus: np.ndarray
    plugin_minus: np.ndarray
    active: np.ndarray
    mode: str = "discrete"
    fold: Optional[np.ndarray] = None
    clipped_share: float = 0.0


def pseudo_outcome(sign, y, t_obs, nv: NuisanceValues, omega):
    """Orthogonal pseudo-outcome per row; NaN outside the active rows.

    Rows whose ratio bounds are one-sided (b- = 1 or b+ = 1) have a point
    identified bound equal to the conditional mean and use the AIPW score.
    """
    y = np.asarray(y, float)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = (np.asarray(t_obs) == nv.t) * np.asarray(omega, float) / (nv.pi_t * nv.pi_g)
    bm, bp = nv.b_minus, nv.b_plus
    if sign == "upper":
        q, gu, gl, bu, bl = nv.q_plus, nv.gu_plus, nv.gl_plus, bm, bp
    elif sign == "lower":
        q, gu, gl, bu, bl = nv.q_minus, nv.gu_minus, nv.gl_minus, bp, bm
    else:
        raise EstimationError(f"sign must be 'upper' or 'lower', got {sign!r}")
    with np.errstate(invalid="ignore", divide="ignore"):
        plug = q + gu / bu - gl / bl
        corr = w * ((np.maximum(y - q, 0) - gu) / bu - (np.maximum(q - y, 0) - gl) / bl)
        phi = np.where(nv.collapsed, nv.mean + w * (y - nv.mean), plug + corr)
        plug = np.where(nv.collapsed, nv.mean, plug)
    phi = np.where(nv.active, phi, np.nan)
    bad = np.flatnonzero(nv.active & ~np.isfinite(phi))
    if bad.size:
        raise NumericError(f"non-finite pseudo-outcome at row {int(bad[0])}")
    return phi, np.where(nv.active, plug, np.nan)


def compute_pseudo_outcomes(y, t_obs, z_obs, nv: NuisanceValues, kernel: Optional[KernelSpec] = None):
    mode = "discrete" if kernel is None else "continuous"
    omega = localization_weight(mode, z_obs, nv.z, kernel)
    pp, plug_p = pseudo_outcome("upper", y, t_obs, nv, omega)
    pm, plug_m = pseudo_outcome("lower", y, t_obs, nv, omega)
    return PseudoOutcomes(nv.t, nv.z, pp, pm, plug_p, plug_m, nv.active.copy(), mode, nv.fold,
                          nv.clipped_share)


# ------------------------------------------------------------------ aggregates

@dataclass
class ApoBounds:
    lo: float
    hi: float
    var_lo: float
    var_hi: float
    ci_lo: tuple
    ci_hi: tuple
    n: int
    crossed: bool = False

    @property
    def ci(self) -> tuple:
        return self.ci_lo[0], self.ci_hi[1]


def _mean_ci(v):
    v = np.asarray(v, float)
    n = v.size
    mean = math.fsum(v) / n
    var = math.fsum((v - mean) ** 2) / max(n - 1, 1) if n > 1 else 0.0
    half = Z95 * math.sqrt(var / n)
    return mean, var, (mean - half, mean + half)


def estimate_apo_bounds(phi_plus, phi_minus) -> ApoBounds:
    """Sample means of the pseudo-outcomes with normal 95% intervals."""
    pp = np.asarray(phi_plus, float)
    pm = np.asarray(phi_minus, float)
    keep = np.isfinite(pp) & np.isfinite(pm)
    if not keep.any():
        raise EstimationError("no pseudo-outcomes to average")
    hi, vhi, ci_hi = _mean_ci(pp[keep])
    lo, vlo, ci_lo = _mean_ci(pm[keep])
    crossed = lo > hi
    if crossed:
        lo, hi, vlo, vhi, ci_lo, ci_hi = hi, lo, vhi, vlo, ci_hi, ci_lo
    return ApoBounds(lo, hi, vlo, vhi, ci_lo, ci_hi, int(keep.sum()), crossed)


def plugin_estimate(po: PseudoOutcomes) -> ApoBounds:
    """Bounds from substituting the fitted nuisances, without correction."""
    return estimate_apo_bounds(po.plugin_plus, po.plugin_minus)


@dataclass
class CapoBounds:
    upper_model: object
    lower_model: object

    def predict(self, x):
        x = np.asarray(x, float).reshape(len(x), -1)
        hi, lo = self.upper_model.predict(x), self.lower_model.predict(x)
        return np.minimum(lo, hi), np.maximum(lo, hi)

    def crossings(self, x) -> int:
        x = np.asarray(x, float).reshape(len(x), -1)
        return int(np.sum(self.lower_model.predict(x) > self.upper_model.predict(x)))


def estimate_capo_bounds(x, phi_plus, phi_minus, spec: LearnerSpec = LearnerSpec()) -> CapoBounds:
    """Second-stage regressions of the pseudo-outcomes on the covariates."""
    x = np.asarray(x, float).reshape(len(phi_plus), -1)
    keep = np.isfinite(phi_plus) & np.isfinite(phi_minus)
    if keep.sum() < 2:
        raise EstimationError("too few rows for the second-stage regression")
    up = make_regressor(spec).fit(x[keep], np.asarray(phi_plus)[keep])
    lo = make_regressor(spec).fit(x[keep], np.asarray(phi_minus)[keep])
    return CapoBounds(up, lo)


@dataclass
class EffectBound:
    kind: str
    t: int
    z: float
    t_prime: int
    z_prime: float
    lo: float
    hi: float
    ci: tuple
    var_lo: float
    var_hi: float
    n: int
    phi_plus: Optional[np.ndarray] = field(default=None, repr=False)
    phi_minus: Optional[np.ndarray] = field(default=None, repr=False)


def _check_effect_args(kind, a: PseudoOutcomes, b: PseudoOutcomes):
    if kind not in EFFECT_KINDS:
        raise EstimationError(f"unknown effect kind {kind!r}")
    same_z = abs(a.z - b.z) <= 1e-12
    if kind == "direct" and (not same_z or a.t == b.t):
        raise EstimationError("a direct effect contrasts t vs t' at a common z")
    if kind == "spillover" and (a.t != b.t or same_z):
        raise EstimationError("a spillover effect contrasts z vs z' at a common t")
    if kind == "overall" and a.t == b.t and same_z:
        raise EstimationError("an overall effect needs (t, z) != (t', z')")


def effect_bounds(kind: str, a: PseudoOutcomes, b: PseudoOutcomes, plugin=False) -> EffectBound:
    """[tau-, tau+] with tau+ = f+(a) - f-(b) and tau- = f-(a) - f+(b).

    Works on differenced pseudo-outcomes over the rows active for both
    arguments, so the interval inherits the per-row CLT.
    """
    _check_effect_args(kind, a, b)
    if plugin:
        ap, am, bp, bm = a.plugin_plus, a.plugin_minus, b.plugin_plus, b.plugin_minus
    else:
        ap, am, bp, bm = a.phi_plus, a.phi_minus, b.phi_plus, b.phi_minus
    both = a.active & b.active
    if not both.any():
        raise PositivityError("no rows where both exposure levels are attainable")
    tau_p = np.where(both, ap - bm, np.nan)
    tau_m = np.where(both, am - bp, np.nan)
    r = estimate_apo_bounds(tau_p, tau_m)
    return EffectBound(kind, a.t, a.z, b.t, b.z, r.lo, r.hi, r.ci, r.var_lo, r.var_hi, r.n, tau_p, tau_m)


# ---------------------------------------------------------- continuous exposure

def crossfit_localized(x, t_obs, z_obs, y, t, z, kernel: KernelSpec, b_minus, b_plus, pi_t, pi_g,
                       spec: LearnerSpec = LearnerSpec(kind="binned"), K=2, seed=0,
                       clip=EPS_CLIP) -> NuisanceValues:
    """Cross-fitted outcome nuisances with kernel-weighted training rows.

    The fits are local-constant in the exposure, so values served at a
    row's observed exposure coincide with those at the target level.
    ``pi_t`` is P(T = t | x) and ``pi_g`` the exposure density at each
    row's observed exposure; both are supplied by the caller.
    """
    x = np.asarray(x, float).reshape(len(y), -1)
    y = np.asarray(y, float)
    n = y.size
    bm = np.broadcast_to(np.asarray(b_minus, float), (n,)).copy()
    bp = np.broadcast_to(np.asarray(b_plus, float), (n,)).copy()
    tail = alpha_levels(bm, bp)
    collapsed = (bm >= 1 - 1e-12) | (bp <= 1 + 1e-12)
    weight = (np.asarray(t_obs) == t) * kernel(z_obs, z)
    folds = make_folds(n, K, seed)
    vals = {k: np.empty(n) for k in ("q_plus", "gu_plus", "gl_plus", "q_minus", "gu_minus", "gl_minus", "mean")}
    for k in range(K):
        tr, te = folds.train(k), folds.test(k)
        if weight[tr].sum() <= 0:
            raise PositivityError(f"fold {k}: no training rows near z={z:g}")
        model = fit_outcome_model(spec, x[tr], y[tr], weight[tr], tail.alpha_plus[tr],
                                  tail.alpha_minus[tr], collapsed[tr])
        for key, v in outcome_nuisances(model, x[te], tail.alpha_plus[te], tail.alpha_minus[te],
                                        collapsed[te]).items():
            vals[key][te] = v
    pi_g = np.asarray(pi_g, float)
    return NuisanceValues(t=t, z=z, pi_t=np.clip(np.asarray(pi_t, float), clip, 1 - clip),
                          pi_g=np.maximum(pi_g, clip), b_minus=bm, b_plus=bp,
                          active=np.ones(n, dtype=bool), fold=folds.assignments.copy(),
                          clipped_share=float(np.mean(pi_g < clip)), **vals)


# ------------------------------------------------------------ full pipeline

@dataclass
class BoundResult:
    t: int
    z: float
    model: str
    factor: float
    apo: ApoBounds
    plugin: ApoBounds
    capo_grid: list
    effects: list
    active_share: float
    clipped_share: float
    seeds: dict
    capo_crossings: int = 0
    nonsharp_share: float = 0.0

    def to_dict(self) -> dict:
        a = self.apo
        return {
            "target": {"t": self.t, "z": self.z},
            "model": self.model,
            "factor": self.factor,
            "apo": {"lo": a.lo, "hi": a.hi, "var_lo": a.var_lo, "var_hi": a.var_hi,
                    "ci_lo": list(a.ci_lo), "ci_hi": list(a.ci_hi), "n": a.n, "crossed": a.crossed},
            "plugin": {"lo": self.plugin.lo, "hi": self.plugin.hi},
            "effects": [{k: v for k, v in asdict(e).items() if k not in ("phi_plus", "phi_minus")}
                        | {"ci": list(e.ci)} for e in self.effects],
            "capo_grid": self.capo_grid,
            "active_share": self.active_share,
            "clipped_share": self.clipped_share,
            "capo_crossings": self.capo_crossings,
            "nonsharp_share": self.nonsharp_share,
            "seeds": self.seeds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def nonsharp_share(nv: NuisanceValues) -> float:
    """Share of active rows where 1/b+ < pi_g, so a discrete-exposure bound may not be attained."""
    act = nv.active & ~nv.collapsed
    if not act.any():
        return 0.0
    return float(np.mean(nv.b_plus[act] * nv.pi_g[act] > 1 + 1e-12))


def estimate_target(cf: CrossFitter, t: int, z: float, misspec: MisspecModel) -> PseudoOutcomes:
    nv = cf.fit(t, z, misspec)
    return compute_pseudo_outcomes(cf.data.y, cf.data.t, cf.data.z_assumed, nv)


def estimate_bounds(cf: CrossFitter, misspec: MisspecModel, t: int, z: float, x_grid=None,
                    second_stage: LearnerSpec = LearnerSpec(), contrasts=()) -> BoundResult:
    """APO, CAPO and effect bounds for target (t, z).

    ``contrasts`` lists ``(kind, t_prime, z_prime)`` tuples for effect bounds.
    """
    nv = cf.fit(t, z, misspec)
    po = compute_pseudo_outcomes(cf.data.y, cf.data.t, cf.data.z_assumed, nv)
    apo = estimate_apo_bounds(po.phi_plus, po.phi_minus)
    grid, crossings = [], 0
    if x_grid is not None:
        xg = np.asarray(x_grid, float).reshape(len(x_grid), -1)
        act = po.active
        capo = estimate_capo_bounds(cf.data.x[act], po.phi_plus[act], po.phi_minus[act], second_stage)
        lo, hi = capo.predict(xg)
        crossings = capo.crossings(xg)
        grid = [{"x": xg[i].tolist(), "lo": float(lo[i]), "hi": float(hi[i])} for i in range(len(xg))]
    effects = []
    for kind, tp, zp in contrasts:
        other = estimate_target(cf, tp, zp, misspec)
        effects.append(effect_bounds(kind, po, other))
    return BoundResult(t, z, misspec.describe(), misspec.factor, apo, plugin_estimate(po), grid,
                       effects, float(po.active.mean()), po.clipped_share,
                       {"folds": cf.folds.seed}, crossings, nonsharp_share(nv))
