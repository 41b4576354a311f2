import numpy as np
import pytest

from netbound.netgraph import Graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def star3():
    # center 0 with leaves 1, 2, 3
    return Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
