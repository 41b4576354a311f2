"""Monte Carlo property studies with injected or known nuisances.

These back the unbiasedness, orthogonality, kernel-consistency, oracle
agreement and exposure-exactness checks.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from scipy.stats import beta as beta_dist
from scipy.stats import norm

from ..dgp import DgpConfig, outcome_mean, simulate
from ..estimator import (KernelSpec, bounds_from_distribution, compute_pseudo_outcomes,
                         crossfit_localized, estimate_apo_bounds)
from ..exposure import ExposureSpec
from ..learners import LearnerSpec, count_pmfs, exposure_sets
from ..netgraph import gen_barabasi_albert, gen_erdos_renyi
from ..oracle import (DiscreteConditional, enumerate_exposure_distribution, normal_bounds,
                      normal_nuisances, oracle_nuisance_values, rockafellar_scan, tilted_density_bound)
from ..sensitivity import MisspecModel

THRESHOLD_DGP = dict(spec_true=ExposureSpec("threshold", c=0.45), spec_assumed=ExposureSpec("threshold", c=0.5))


def _threshold_instance(n, seed, d=1, m=3):
    ss = np.random.SeedSequence(seed)
    gs, ds = (int(s) for s in ss.generate_state(2))
    g = gen_barabasi_albert(n, m, gs)
    cfg = DgpConfig(d=d, seed=ds, **THRESHOLD_DGP)
    return g, cfg, simulate(cfg, g)


# ------------------------------------------------------------- unbiasedness

def run_unbiasedness(n=5000, seed=0, misspec=None, t=1, z=1.0) -> dict:
    """Mean of the upper pseudo-outcome under true nuisances vs the true bound."""
    misspec = misspec or MisspecModel("msm", gamma_minus=0.5, gamma_plus=2.0)
    g, cfg, data = _threshold_instance(n, seed)
    nv = oracle_nuisance_values(data, g, cfg, cfg.spec_assumed, misspec, t, z)
    po = compute_pseudo_outcomes(data.y, data.t, data.z_assumed, nv)
    lo, hi = normal_bounds(outcome_mean(t, z, data.x, cfg), cfg.noise_sd, nv.b_minus, nv.b_plus)
    act = nv.active
    phi = po.phi_plus[act]
    se = float(np.std(phi, ddof=1) / np.sqrt(phi.size))
    phi_lo = po.phi_minus[act]
    return {"mean_phi_plus": float(phi.mean()), "psi_plus": float(hi[act].mean()), "se_plus": se,
            "z_score_plus": float((phi.mean() - hi[act].mean()) / se),
            "mean_phi_minus": float(phi_lo.mean()), "psi_minus": float(lo[act].mean()),
            "se_minus": float(np.std(phi_lo, ddof=1) / np.sqrt(phi_lo.size)), "n": int(act.sum())}


# ------------------------------------------------------------ orthogonality

def _perturbed(nv, sigma, m, kind, delta, scale=1.0):
    """Copy of ``nv`` with one nuisance block moved by ``delta``."""
    if kind == "q":
        out = {}
        for sign in ("plus", "minus"):
            q = getattr(nv, "q_" + sign) + delta * sigma
            c = (q - m) / sigma
            out["q_" + sign] = q
            out["gu_" + sign] = sigma * (norm.pdf(c) - c * norm.sf(c))
            out["gl_" + sign] = sigma * (c * norm.cdf(c) + norm.pdf(c))
        return nv.copy(**out)
    if kind == "joint":
        return nv.copy(pi_g=nv.pi_g * (1 + delta), gu_plus=nv.gu_plus + delta * scale,
                       gl_plus=nv.gl_plus + delta * scale, gu_minus=nv.gu_minus + delta * scale,
                       gl_minus=nv.gl_minus + delta * scale)
    if kind == "pi":
        return nv.copy(pi_g=nv.pi_g * (1 + delta))
    raise ValueError(f"unknown perturbation {kind!r}")


def _slope(deltas, bias):
    bias = np.abs(np.asarray(bias, float))
    if np.any(bias <= 0):
        return float("nan")
    return float(np.polyfit(np.log(deltas), np.log(bias), 1)[0])


def run_orthogonality(n=5000, seeds=50, deltas=(0.05, 0.1, 0.2), seed=0, misspec=None, t=1, z=1.0) -> dict:
    """Bias of the APO upper bound under nuisance perturbations of size delta.

    Each seed draws one dataset; every perturbation is applied to the same
    data so the bias is the mean over seeds of (perturbed - unperturbed).
    """
    misspec = misspec or MisspecModel("msm", gamma_minus=0.5, gamma_plus=2.0)
    kinds = ("q", "joint", "pi")
    diffs = {(k, arm): np.zeros((seeds, len(deltas))) for k in kinds for arm in ("orthogonal", "plugin")}
    for s in range(seeds):
        g, cfg, data = _threshold_instance(n, (seed, s))
        nv = oracle_nuisance_values(data, g, cfg, cfg.spec_assumed, misspec, t, z)
        m = outcome_mean(t, z, data.x, cfg)
        base = compute_pseudo_outcomes(data.y, data.t, data.z_assumed, nv)
        act = nv.active
        b_orth = base.phi_plus[act].mean()
        b_plug = base.plugin_plus[act].mean()
        for k in kinds:
            for j, d in enumerate(deltas):
                po = compute_pseudo_outcomes(data.y, data.t, data.z_assumed,
                                             _perturbed(nv, cfg.noise_sd, m, k, d))
                diffs[(k, "orthogonal")][s, j] = po.phi_plus[act].mean() - b_orth
                diffs[(k, "plugin")][s, j] = po.plugin_plus[act].mean() - b_plug
    out = {"deltas": list(deltas), "seeds": seeds, "n": n}
    for (k, arm), v in diffs.items():
        bias = v.mean(axis=0)
        se = v.std(axis=0, ddof=1) / np.sqrt(seeds)
        out[f"{k}/{arm}"] = {"bias": bias.tolist(), "se": se.tolist(), "slope": _slope(deltas, bias)}
    return out


# -------------------------------------------------------- kernel consistency

KERNEL_DESIGN = dict(amplitude=1.5, tau=0.8, beta_t=0.8, z_target=0.25)


def _beta_params(x):
    return 2.0 + 0.5 * x, 2.0 - 0.5 * x


def kernel_outcome_mean(t, z, x, amplitude=KERNEL_DESIGN["amplitude"], tau=KERNEL_DESIGN["tau"]):
    x = np.asarray(x, float).reshape(-1)
    return tau * t + amplitude * np.sin(2 * np.pi * z) + 0.6 * np.tanh(x) + 0.4 * np.sin(x) - 0.2 * x ** 2


def simulate_continuous(n, seed):
    """Covariate, unit treatment, continuous exposure and outcome draws."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    pi = expit(KERNEL_DESIGN["beta_t"] * x)
    t = (rng.uniform(size=n) < pi).astype(int)
    a, b = _beta_params(x)
    z = rng.beta(a, b)
    y = kernel_outcome_mean(t, z, x) + rng.normal(size=n)
    return x, t, z, y, pi, beta_dist.pdf(z, a, b)


def run_kernel_consistency(n=8000, seeds=50, bandwidths=(0.2, 0.1, 0.05), seed=0, b=(0.5, 2.0), t=1,
                           learner=LearnerSpec(kind="binned", bins=5, min_leaf=20), K=2) -> dict:
    """Deviation of the kernel-localized APO upper bound from the pointwise truth."""
    z0 = KERNEL_DESIGN["z_target"]
    devs = np.zeros((seeds, len(bandwidths)))
    for s in range(seeds):
        x, tt, z, y, pi, dens = simulate_continuous(n, np.random.SeedSequence((seed, s)))
        _, hi = normal_bounds(kernel_outcome_mean(t, z0, x), 1.0, b[0], b[1])
        truth = float(hi.mean())
        pi_t = pi if t == 1 else 1 - pi
        for j, h in enumerate(bandwidths):
            kern = KernelSpec("epanechnikov", h)
            nv = crossfit_localized(x, tt, z, y, t, z0, kern, b[0], b[1], pi_t, dens, learner, K, seed=s)
            po = compute_pseudo_outcomes(y, tt, z, nv, kern)
            devs[s, j] = estimate_apo_bounds(po.phi_plus, po.phi_minus).hi - truth
    absd = np.abs(devs)
    return {"bandwidths": list(bandwidths), "mean_abs_dev": absd.mean(axis=0).tolist(),
            "mean_dev": devs.mean(axis=0).tolist(),
            "share_improved": float(np.mean(absd[:, -1] < absd[:, 0])), "seeds": seeds, "n": n}


# ------------------------------------------------------------ oracle checks

def oracle_agreement(instances=200, seed=0, grid_size=10_000) -> dict:
    """Max disagreement between closed form, variational scan and tilted means."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        dc = DiscreteConditional.random(rng)
        bm = float(rng.uniform(0.05, 1.0))
        bp = float(1.0 / rng.uniform(0.05, 1.0))
        lo, hi = bounds_from_distribution(dc.support, dc.probs, bm, bp)
        s_hi, s_lo, _, _ = rockafellar_scan(dc, bm, bp, grid_size)
        t_hi, t_lo = tilted_density_bound(dc, bm, bp)
        worst = max(worst, abs(hi - s_hi), abs(hi - t_hi), abs(lo - s_lo), abs(lo - t_lo))
    return {"instances": instances, "max_deviation": worst}


def collapse_and_limits(seed=0, n=2000) -> dict:
    """Identity-model collapse to AIPW and the widening limit on a discrete outcome."""
    g, cfg, data = _threshold_instance(n, seed)
    nv = oracle_nuisance_values(data, g, cfg, cfg.spec_assumed, MisspecModel("msm"), 1, 1.0)
    # perturb the outcome model so the AIPW check is not trivially exact
    rng = np.random.default_rng(seed)
    shift = rng.normal(0, 0.3, data.n)
    m_hat = nv.mean + shift
    nu = normal_nuisances(m_hat, 1.0, 1.0, 1.0)
    nv = nv.copy(mean=m_hat, **{k: v for k, v in nu.items() if k != "mean"})
    po = compute_pseudo_outcomes(data.y, data.t, data.z_assumed, nv)
    w = (data.t == 1) * (data.z_assumed == 1.0) / (nv.pi_t * nv.pi_g)
    aipw = float(np.mean(m_hat + w * (data.y - m_hat)))
    apo = estimate_apo_bounds(po.phi_plus, po.phi_minus)
    collapse_err = max(abs(apo.lo - aipw), abs(apo.hi - aipw))

    dc = DiscreteConditional(np.array([-1.0, 0.0, 0.5, 2.0]), np.array([0.1, 0.4, 0.3, 0.2]))
    scales = [1, 2, 4, 8, 16, 64, 256, 1e4, 1e6]
    ups, lows = [], []
    for k in scales:
        lo, hi = bounds_from_distribution(dc.support, dc.probs, 1.0 / k, float(k))
        ups.append(hi)
        lows.append(lo)
    return {"collapse_error": float(collapse_err), "aipw": aipw, "upper_path": ups, "lower_path": lows,
            "upper_monotone": bool(np.all(np.diff(ups) >= -1e-12)),
            "lower_monotone": bool(np.all(np.diff(lows) <= 1e-12)),
            "upper_limit_gap": float(dc.support[-1] - ups[-1]), "lower_limit_gap": float(lows[-1] - dc.support[0])}


def exposure_exactness(graphs=20, n=60, p=0.08, max_degree=12, seed=0) -> dict:
    """Analytic Poisson-binomial exposure pmf vs exhaustive enumeration."""
    rng = np.random.default_rng(seed)
    worst, checked = 0.0, 0
    for k in range(graphs):
        g = gen_erdos_renyi(n, p, int(rng.integers(2 ** 31)))
        probs = rng.uniform(0.05, 0.95, n)
        spec = ExposureSpec("mean") if k % 2 == 0 else ExposureSpec("threshold", c=float(rng.uniform(0.2, 0.8)))
        pmfs = count_pmfs(exposure_sets(g, spec), probs)
        for i in range(n):
            deg = int(g.degrees[i])
            if deg == 0 or deg > max_degree:
                continue
            exact = enumerate_exposure_distribution(g, i, probs, spec)
            pmf = pmfs[i]
            if spec.kind == "threshold":
                kc = int(np.ceil(deg * spec.c - 1e-9))
                analytic = {1.0: float(pmf[kc:].sum()), 0.0: float(pmf[:kc].sum())}
            else:
                analytic = {round(j / deg, 12): float(pmf[j]) for j in range(deg + 1)}
            for zv in set(exact) | set(analytic):
                worst = max(worst, abs(exact.get(zv, 0.0) - analytic.get(zv, 0.0)))
            checked += 1
    return {"graphs": graphs, "nodes_checked": checked, "max_deviation": worst}


__all__ = ["run_unbiasedness", "run_orthogonality", "run_kernel_consistency", "oracle_agreement",
           "collapse_and_limits", "exposure_exactness"]
