import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netbound.netgraph import (Graph, GraphParameterError, gen_barabasi_albert, gen_erdos_renyi, gen_sbm,
                               khop_matrix, khop_neighbors, read_edgelist, write_edgelist)


def test_er_empty_and_complete():
    assert gen_erdos_renyi(3, 0.0, seed=1).edge_count == 0
    g = gen_erdos_renyi(3, 1.0, seed=1)
    assert g.edge_count == 3
    assert np.all(g.degrees == 2)


def test_er_mean_degree():
    g = gen_erdos_renyi(1000, 0.01, seed=7)
    assert 7 <= g.degrees.mean() <= 13


def test_ba_tree_and_counts():
    g = gen_barabasi_albert(5, 1, seed=0)
    assert g.edge_count == 4
    assert nx.is_tree(nx.Graph(list(map(tuple, g.edges()))))
    g = gen_barabasi_albert(100, 2, seed=3)
    assert g.edge_count == 3 + 2 * (100 - 3)  # K3 seed, then m per new node
    assert gen_barabasi_albert(2, 1, seed=0).edge_count == 1


def test_sbm_degenerate():
    g = gen_sbm(4, [2, 2], 1.0, 0.0, seed=0)
    assert sorted(map(tuple, g.edges())) == [(0, 1), (2, 3)]
    assert gen_sbm(4, [2, 2], 0.0, 0.0, seed=0).edge_count == 0


def test_sbm_block_degrees():
    g = gen_sbm(200, [100, 100], 0.1, 0.01, seed=1)
    block = np.repeat([0, 1], 100)
    src = g.edge_sources()
    same = block[src] == block[g.indices]
    intra = np.bincount(src[same], minlength=200).mean()
    inter = np.bincount(src[~same], minlength=200).mean()
    assert abs(intra - 9.9) < 0.3 * 9.9
    assert abs(inter - 1.0) < 0.3


@pytest.mark.parametrize("bad", [dict(n=1, p=0.5), dict(n=10, p=1.5), dict(n=10, p=-0.1)])
def test_er_rejects_bad_parameters(bad):
    with pytest.raises(GraphParameterError):
        gen_erdos_renyi(**bad)


def test_sbm_rejects_bad_partition():
    with pytest.raises(GraphParameterError):
        gen_sbm(5, [2, 2], 0.1, 0.1)


def test_khop_path(path3):
    assert khop_neighbors(path3, 0, 1) == {1}
    assert khop_neighbors(path3, 0, 2) == {1, 2}


def test_khop_matrix_matches_bfs():
    g = gen_erdos_renyi(80, 0.05, seed=4)
    for r in (1, 2, 3):
        m = khop_matrix(g, r)
        for i in range(0, 80, 7):
            row = set(m.indices[m.indptr[i]:m.indptr[i + 1]].tolist())
            assert row == khop_neighbors(g, i, r)
    one = khop_matrix(g, 1)
    for i in range(80):
        assert sorted(one.indices[one.indptr[i]:one.indptr[i + 1]]) == sorted(g.neighbors(i))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 40), p=st.floats(0, 1), seed=st.integers(0, 2 ** 31 - 1),
       kind=st.sampled_from(["er", "ba", "sbm"]))
def test_generated_graphs_symmetric_without_loops(n, p, seed, kind):
    if kind == "er":
        g = gen_erdos_renyi(n, p, seed)
    elif kind == "ba":
        g = gen_barabasi_albert(n, max(1, min(n - 1, int(p * 3) + 1)), seed)
    else:
        g = gen_sbm(n, [n // 2, n - n // 2], p, p / 10, seed)
    a = g.to_scipy()
    assert (a != a.T).nnz == 0
    assert a.diagonal().sum() == 0


def test_edgelist_roundtrip(tmp_path):
    g = gen_erdos_renyi(50, 0.1, seed=2)
    path = tmp_path / "g.txt"
    write_edgelist(g, path)
    assert read_edgelist(path) == g


def test_from_edges_drops_self_loops_and_duplicates():
    g = Graph.from_edges(3, [(0, 0), (0, 1), (1, 0)])
    assert g.edge_count == 1
    with pytest.raises(GraphParameterError):
        Graph.from_edges(3, [(0, 3)])


def test_subgraph_drops_isolates():
    g = Graph.from_edges(4, [(0, 1), (1, 2)])
    assert g.isolated().tolist() == [3]
    sub = g.subgraph(np.flatnonzero(g.degrees > 0))
    assert sub.node_count == 3 and sub.edge_count == 2
