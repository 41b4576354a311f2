import numpy as np
import pytest

from netbound.dgp import (DgpConfig, assign_treatments, baseline, load_dataset, outcome_mean, sample_covariates,
                          save_dataset, simulate, true_effects, true_propensity)
from netbound.exposure import ExposureSpec, apply_exposure
from netbound.netgraph import gen_erdos_renyi


@pytest.fixture(scope="module")
def graph():
    g = gen_erdos_renyi(10_000, 0.001, seed=5)
    return g.subgraph(np.flatnonzero(g.degrees > 0))


def test_covariates():
    assert abs(sample_covariates(100_000, 1, seed=0).mean()) < 0.02
    x = sample_covariates(1, 3, seed=1)
    assert x.shape == (1, 3) and np.all(np.abs(x) <= 1)
    np.testing.assert_array_equal(sample_covariates(50, 2, seed=9), sample_covariates(50, 2, seed=9))


def test_propensity_values():
    assert true_propensity(np.zeros((1, 2)), [0.3, -2.0])[0] == 0.5
    assert true_propensity(np.array([[1.0]]), [0.8])[0] == pytest.approx(0.68997, abs=1e-5)
    assert true_propensity(np.array([[-1.0]]), [0.8])[0] == pytest.approx(1 - 0.68997, abs=1e-5)


def test_assign_treatments():
    x = sample_covariates(10_000, 1, seed=2)
    assert abs(assign_treatments(x, [0.0], seed=3).mean() - 0.5) < 0.02
    np.testing.assert_array_equal(assign_treatments(x, [0.8], seed=4), assign_treatments(x, [0.8], seed=4))
    xp = np.abs(x) + 0.5
    assert assign_treatments(xp, [50.0], seed=5).mean() > 0.999


def test_outcome_mean_values():
    assert outcome_mean(0, 0, np.zeros((1, 1)))[0] == 0.0
    assert outcome_mean(1, 1, np.zeros((1, 1)))[0] == pytest.approx(1.6)
    f = 0.6 * np.tanh(0.3) + 0.4 * np.sin(0.3) - 0.2 * 0.09
    assert outcome_mean(1, 0.5, np.array([[0.3]]))[0] == pytest.approx(0.8 + 0.3 + 0.1 + f)
    assert baseline(np.array([[0.3, 0.3]]))[0] == pytest.approx(2 * f)


def test_noiseless_correct_spec(graph):
    cfg = DgpConfig(noise_sd=0.0, seed=1)
    d = simulate(cfg, graph)
    np.testing.assert_allclose(d.y, outcome_mean(d.t, d.z_assumed, d.x, cfg), atol=1e-12)


def test_residuals_use_true_exposure(graph):
    cfg = DgpConfig(spec_true=ExposureSpec("threshold", c=0.45), spec_assumed=ExposureSpec("mean"), seed=2)
    d = simulate(cfg, graph)
    assert abs(np.mean(d.y - outcome_mean(d.t, d.z_true, d.x, cfg))) < 0.03
    np.testing.assert_array_equal(d.z_true, apply_exposure(cfg.spec_true, graph, d.t).values)


def test_assumed_mapping_never_changes_outcomes(graph):
    a = simulate(DgpConfig(spec_assumed=ExposureSpec("mean"), seed=3), graph)
    b = simulate(DgpConfig(spec_assumed=ExposureSpec("threshold", c=0.3), seed=3), graph)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.t, b.t)


def test_true_effects():
    cfg = DgpConfig()
    assert true_effects(cfg, 1, 0.0, 0, 0.0)["direct"] == pytest.approx(0.8)
    assert true_effects(cfg, 0, 1.0, 0, 0.0)["spillover"] == pytest.approx(0.6)
    assert true_effects(cfg, 1, 1.0, 0, 0.0)["overall"] == pytest.approx(1.6)


def test_weighted_true_mapping_uses_perturbed_weights(graph):
    cfg = DgpConfig(spec_true=ExposureSpec("weighted_mean"), weight_eps=0.05, seed=4)
    d = simulate(cfg, graph)
    assert not np.allclose(d.z_true, d.z_assumed)
    # each weight is within eps of 1/n, so the exposures differ by at most n * eps
    assert np.all(np.abs(d.z_true - d.z_assumed) <= graph.degrees * 0.05 + 1e-12)


def test_dataset_roundtrip(tmp_path):
    g = gen_erdos_renyi(60, 0.1, seed=1)
    g = g.subgraph(np.flatnonzero(g.degrees > 0))
    d = simulate(DgpConfig(d=2, seed=8), g)
    save_dataset(d, tmp_path / "d.csv")
    e = load_dataset(tmp_path / "d.csv")
    for col in ("x", "t", "z_true", "z_assumed", "y"):
        np.testing.assert_array_equal(getattr(d, col), getattr(e, col))


def test_config_validation():
    with pytest.raises(ValueError):
        DgpConfig(d=0)
    with pytest.raises(ValueError):
        DgpConfig(d=2, beta_t=(1.0,))
