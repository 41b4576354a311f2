import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netbound.exposure import (ExposureError, ExposureSpec, IsolatedNodeError, apply_exposure, exposure_support,
                               treated_counts)
from netbound.netgraph import Graph, gen_erdos_renyi


def test_star_center_mean_and_threshold(star3):
    t = np.array([0, 1, 0, 1])
    assert apply_exposure(ExposureSpec("mean"), star3, t).values[0] == pytest.approx(2 / 3)
    assert apply_exposure(ExposureSpec("threshold", c=0.5), star3, t).values[0] == 1.0
    assert apply_exposure(ExposureSpec("threshold", c=0.7), star3, t).values[0] == 0.0


def test_uniform_weighted_mean_equals_mean():
    rng = np.random.default_rng(0)
    for k in range(50):
        g = gen_erdos_renyi(40, 0.2, seed=k)
        g = g.subgraph(np.flatnonzero(g.degrees > 0))
        t = rng.integers(0, 2, g.node_count)
        w = 1.0 / g.degrees[g.edge_sources()]
        a = apply_exposure(ExposureSpec("mean"), g, t).values
        b = apply_exposure(ExposureSpec("weighted_mean", weights=w), g, t).values
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_support_descriptions():
    ring = Graph.from_edges(6, [(i, (i + 1) % 6) for i in range(6)] + [(i, (i + 2) % 6) for i in range(6)])
    sup = exposure_support(ExposureSpec("mean"), ring)
    np.testing.assert_allclose(sup.grids[0], [0, 0.25, 0.5, 0.75, 1])
    assert sup.contains(0, 0.75) and not sup.contains(0, 0.6)
    np.testing.assert_array_equal(exposure_support(ExposureSpec("threshold"), ring).grids[3], [0, 1])
    w = np.random.default_rng(1).uniform(0.1, 0.4, ring.indices.size)
    assert exposure_support(ExposureSpec("weighted_mean", weights=w), ring).kind == "continuous"


def test_isolated_nodes_rejected():
    g = Graph.from_edges(3, [(0, 1)])
    with pytest.raises(IsolatedNodeError):
        apply_exposure(ExposureSpec("mean"), g, np.array([1, 0, 1]))


@pytest.mark.parametrize("kw", [dict(kind="nope"), dict(kind="threshold", c=1.5), dict(kind="khop_mean", radius=0)])
def test_bad_specs(kw):
    with pytest.raises(ExposureError):
        ExposureSpec(**kw)


def test_nonbinary_treatment_rejected(path3):
    with pytest.raises(ExposureError):
        apply_exposure(ExposureSpec("mean"), path3, np.array([0, 2, 1]))


def test_khop_mean_on_path(path3):
    z = apply_exposure(ExposureSpec("khop_mean", radius=2), path3, np.array([0, 1, 1])).values
    np.testing.assert_allclose(z, [1.0, 0.5, 0.5])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10 ** 6), p=st.floats(0.05, 0.5))
def test_mean_exposure_times_degree_is_count(seed, p):
    g = gen_erdos_renyi(30, p, seed)
    g = g.subgraph(np.flatnonzero(g.degrees > 0))
    if g.node_count < 2:
        return
    t = np.random.default_rng(seed).integers(0, 2, g.node_count)
    z = apply_exposure(ExposureSpec("mean"), g, t).values
    nz = z * g.degrees
    np.testing.assert_allclose(nz, np.rint(nz), atol=1e-9)
    np.testing.assert_array_equal(np.rint(nz).astype(int), treated_counts(g, t))
