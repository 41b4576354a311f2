import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netbound.dgp import DgpConfig, outcome_mean, simulate
from netbound.estimator import (EstimationError, KernelSpec, bounds_from_distribution, capo_closed_form,
                                compute_pseudo_outcomes, effect_bounds, estimate_apo_bounds, estimate_bounds,
                                estimate_capo_bounds, localization_weight, plugin_estimate, pseudo_outcome)
from netbound.exposure import ExposureSpec
from netbound.learners import CrossFitter, LearnerSpec, NuisanceValues
from netbound.netgraph import gen_barabasi_albert
from netbound.oracle import normal_bounds, normal_nuisances, oracle_nuisance_values
from netbound.sensitivity import MisspecModel

MSM = MisspecModel("msm", gamma_minus=0.5, gamma_plus=2.0)
THRESH = dict(spec_true=ExposureSpec("threshold", c=0.45), spec_assumed=ExposureSpec("threshold", c=0.5))


def _threshold_data(n, seed, **kw):
    g = gen_barabasi_albert(n, 3, seed=seed)
    cfg = DgpConfig(seed=seed + 1, **{**THRESH, **kw})
    return g, cfg, simulate(cfg, g)


def _random_nv(rng, n, bm, bp):
    m = rng.normal(size=n)
    nu = normal_nuisances(m, rng.uniform(0.5, 2.0), bm, bp)
    return NuisanceValues(t=1, z=1.0, pi_t=rng.uniform(0.1, 0.9, n), pi_g=rng.uniform(0.1, 0.9, n),
                          b_minus=np.full(n, bm), b_plus=np.full(n, bp), active=np.ones(n, bool),
                          fold=np.zeros(n, int), **nu)


def test_identity_bounds_give_mean():
    q, gu, gl = 0.3, 0.9, 0.4
    assert capo_closed_form(q, gu, gl, 1.0, 1.0, "upper") == pytest.approx(q + gu - gl)
    assert capo_closed_form(q, gu, gl, 1.0, 1.0, "lower") == pytest.approx(q + gu - gl)


def test_uniform_outcome_example():
    assert capo_closed_form(2 / 3, 1 / 18, 2 / 9, 0.5, 2.0, "upper") == pytest.approx(2 / 3)


@settings(max_examples=100, deadline=None)
@given(half=st.lists(st.floats(0.01, 5), min_size=1, max_size=6, unique=True), center=st.floats(-3, 3),
       gamma=st.floats(1.01, 20), seed=st.integers(0, 1000))
def test_symmetric_outcome_reciprocal_bounds(half, center, gamma, seed):
    half = np.sort(np.asarray(half))
    y = np.concatenate([center - half[::-1], center + half])
    w = np.random.default_rng(seed).dirichlet(np.ones(half.size)) / 2
    p = np.concatenate([w[::-1], w])
    lo, hi = bounds_from_distribution(y, p, 1 / gamma, gamma)
    assert lo + hi == pytest.approx(2 * center, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10 ** 6), f1=st.floats(0, 3), f2=st.floats(0, 3))
def test_nested_ratio_bounds_give_nested_intervals(seed, f1, f2):
    rng = np.random.default_rng(seed)
    y = np.sort(rng.choice(np.arange(-30, 31), size=int(rng.integers(1, 8)), replace=False)) / 10
    p = rng.dirichlet(np.ones(y.size))
    g_lo, g_hi = rng.uniform(0.1, 1), 1 / rng.uniform(0.1, 1)
    a, b = sorted([f1, f2])
    lo_a, hi_a = bounds_from_distribution(y, p, g_lo ** a, g_hi ** a)
    lo_b, hi_b = bounds_from_distribution(y, p, g_lo ** b, g_hi ** b)
    assert lo_b <= lo_a + 1e-12 and hi_a <= hi_b + 1e-12


def test_localization_weights():
    assert localization_weight("discrete", np.array([0.5, 0.25]), 0.5).tolist() == [1.0, 0.0]
    k = KernelSpec("epanechnikov", 0.1)
    assert localization_weight("continuous", 0.3, 0.3, k) == pytest.approx(7.5)
    grid = np.linspace(-1, 1, 20001)
    integral = localization_weight("continuous", grid, 0.2, k).sum() * (grid[1] - grid[0])
    assert integral == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(EstimationError):
        localization_weight("continuous", grid, 0.2)
    with pytest.raises(EstimationError):
        KernelSpec("epanechnikov", 0.0)


def test_untreated_rows_equal_plugin(rng):
    nv = _random_nv(rng, 50, 0.5, 2.0)
    y = rng.normal(size=50)
    phi, plug = pseudo_outcome("upper", y, np.zeros(50, int), nv, np.ones(50))
    np.testing.assert_allclose(phi, plug)


def test_identity_model_is_aipw(rng):
    n = 200
    nv = _random_nv(rng, n, 1.0, 1.0)
    y = rng.normal(size=n)
    t = rng.integers(0, 2, n)
    omega = rng.integers(0, 2, n).astype(float)
    w = (t == 1) * omega / (nv.pi_t * nv.pi_g)
    for sign in ("upper", "lower"):
        phi, _ = pseudo_outcome(sign, y, t, nv, omega)
        np.testing.assert_allclose(phi, nv.mean + w * (y - nv.mean), rtol=0, atol=1e-12)


def test_constant_pseudo_outcomes_zero_width():
    a = estimate_apo_bounds(np.full(10, 2.5), np.full(10, 2.5))
    assert a.lo == a.hi == 2.5
    assert a.ci_lo == (2.5, 2.5) and a.ci_hi == (2.5, 2.5)


def test_crossed_bounds_are_swapped():
    a = estimate_apo_bounds(np.zeros(5), np.ones(5))
    assert a.crossed and a.lo == 0 and a.hi == 1


def test_noiseless_identity_recovers_truth():
    g, cfg, data = _threshold_data(500, 3, noise_sd=0.0, spec_true=ExposureSpec("threshold", c=0.5))
    nv = oracle_nuisance_values(data, g, cfg, cfg.spec_assumed, MisspecModel("msm"), 1, 1.0)
    po = compute_pseudo_outcomes(data.y, data.t, data.z_assumed, nv)
    apo = estimate_apo_bounds(po.phi_plus, po.phi_minus)
    truth = outcome_mean(1, 1.0, data.x, cfg).mean()
    assert apo.lo == pytest.approx(truth, abs=1e-12) and apo.hi == pytest.approx(truth, abs=1e-12)
    other = compute_pseudo_outcomes(data.y, data.t, data.z_assumed,
                                    oracle_nuisance_values(data, g, cfg, cfg.spec_assumed, MisspecModel("msm"), 0,
                                                           1.0))
    eff = effect_bounds("direct", po, other)
    assert eff.lo == pytest.approx(cfg.tau + cfg.gamma, abs=1e-12)
    assert eff.hi == pytest.approx(cfg.tau + cfg.gamma, abs=1e-12)


def test_direct_effect_at_zero_exposure_collapses():
    g, cfg, data = _threshold_data(500, 4, noise_sd=0.0, spec_true=ExposureSpec("threshold", c=0.5))
    pos = [compute_pseudo_outcomes(data.y, data.t, data.z_assumed,
                                   oracle_nuisance_values(data, g, cfg, cfg.spec_assumed, MisspecModel("msm"), t,
                                                          0.0)) for t in (1, 0)]
    eff = effect_bounds("direct", *pos)
    assert (eff.lo, eff.hi) == pytest.approx((0.8, 0.8), abs=1e-12)


@pytest.mark.slow
def test_apo_interval_coverage_with_true_nuisances():
    hits = []
    for rep in range(200):
        g, cfg, data = _threshold_data(2000, 1000 + rep)
        nv = oracle_nuisance_values(data, g, cfg, cfg.spec_assumed, MSM, 1, 1.0)
        po = compute_pseudo_outcomes(data.y, data.t, data.z_assumed, nv)
        apo = estimate_apo_bounds(po.phi_plus, po.phi_minus)
        _, hi = normal_bounds(outcome_mean(1, 1.0, data.x, cfg), 1.0, nv.b_minus, nv.b_plus)
        lo_ci, hi_ci = apo.ci_hi
        hits.append(lo_ci <= hi.mean() <= hi_ci)
    assert 0.90 <= np.mean(hits) <= 0.99


def test_capo_second_stage():
    x = np.linspace(-1, 1, 100)
    capo = estimate_capo_bounds(x, np.full(100, 1.5), np.full(100, 1.5), LearnerSpec(kind="poly"))
    lo, hi = capo.predict(x)
    np.testing.assert_allclose(lo, 1.5, atol=1e-6)
    np.testing.assert_allclose(hi, 1.5, atol=1e-6)


def test_capo_matches_closed_form_and_never_crosses():
    g, cfg, data = _threshold_data(5000, 5)
    nv = oracle_nuisance_values(data, g, cfg, cfg.spec_assumed, MSM, 1, 1.0)
    po = compute_pseudo_outcomes(data.y, data.t, data.z_assumed, nv)
    capo = estimate_capo_bounds(data.x, po.phi_plus, po.phi_minus, LearnerSpec(kind="poly"))
    grid = np.linspace(-0.9, 0.9, 100).reshape(-1, 1)
    lo, hi = capo.predict(grid)
    t_lo, t_hi = normal_bounds(outcome_mean(1, 1.0, grid, cfg), 1.0, 0.5, 2.0)
    assert np.sqrt(np.mean((hi - t_hi) ** 2)) < 0.1
    assert np.sqrt(np.mean((lo - t_lo) ** 2)) < 0.1
    assert np.all(lo <= hi)


def test_plugin_close_to_orthogonal_with_true_nuisances():
    g, cfg, data = _threshold_data(5000, 6)
    nv = oracle_nuisance_values(data, g, cfg, cfg.spec_assumed, MSM, 1, 1.0)
    po = compute_pseudo_outcomes(data.y, data.t, data.z_assumed, nv)
    orth = estimate_apo_bounds(po.phi_plus, po.phi_minus)
    plug = plugin_estimate(po)
    se = np.sqrt(orth.var_hi / orth.n)
    assert abs(orth.hi - plug.hi) < 4 * se
    again = plugin_estimate(compute_pseudo_outcomes(data.y, data.t, data.z_assumed, nv))
    assert (again.lo, again.hi) == (plug.lo, plug.hi)


def test_effect_interval_ordered_and_widening():
    g, cfg, data = _threshold_data(1500, 7)
    cf = CrossFitter(data, g, cfg.spec_assumed, 2, 0, LearnerSpec(kind="binned"), LearnerSpec(kind="binned"))
    widths = []
    for factor in (1.0, 2.0):
        model = MSM.scaled(factor)
        res = estimate_bounds(cf, model, 1, 1.0, x_grid=np.linspace(-0.8, 0.8, 5),
                              second_stage=LearnerSpec(kind="poly"), contrasts=[("direct", 0, 1.0)])
        eff = res.effects[0]
        assert eff.lo <= eff.hi
        assert all(p["lo"] <= p["hi"] for p in res.capo_grid)
        widths.append(eff.hi - eff.lo)
    assert widths[1] >= widths[0]


def test_bound_result_json_schema():
    g, cfg, data = _threshold_data(400, 8)
    cf = CrossFitter(data, g, cfg.spec_assumed, 2, 0, LearnerSpec(kind="binned"), LearnerSpec(kind="binned"))
    d = estimate_bounds(cf, MSM, 1, 1.0).to_dict()
    for key in ("target", "model", "factor", "apo", "plugin", "effects", "capo_grid", "active_share"):
        assert key in d
    assert d["apo"]["lo"] <= d["apo"]["hi"]


def test_nonsharp_share_flags_large_upper_bound(rng):
    from netbound.estimator import nonsharp_share
    nv = _random_nv(rng, 100, 0.5, 2.0)
    nv = nv.copy(pi_g=np.r_[np.full(30, 0.8), np.full(70, 0.3)])
    assert nonsharp_share(nv) == pytest.approx(0.3)
    assert nonsharp_share(nv.copy(b_minus=np.ones(100), b_plus=np.ones(100))) == 0.0
