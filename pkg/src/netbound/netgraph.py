"""Undirected networks stored as immutable CSR adjacency arrays."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np


class GraphParameterError(ValueError):
    """Raised for invalid generator arguments or malformed graph input."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph on nodes ``0..node_count-1``.

    Neighbors of node ``i`` are ``indices[indptr[i]:indptr[i+1]]`` in
    increasing order. Arrays are read-only after construction.
    """

    node_count: int
    indptr: np.ndarray
    indices: np.ndarray
    degree_cache: np.ndarray = field(init=False)

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        degrees = np.diff(indptr)
        for arr in (indptr, indices, degrees):
            arr.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "degree_cache", degrees)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        if n < 1:
            raise GraphParameterError(f"node count must be positive, got {n}")
        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                           dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise GraphParameterError("edge endpoint out of range")
        edges = edges[edges[:, 0] != edges[:, 1]]
        both = np.concatenate([edges, edges[:, ::-1]])
        both = np.unique(both, axis=0) if both.size else both.reshape(0, 2)
        counts = np.bincount(both[:, 0], minlength=n) if both.size else np.zeros(n, np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return cls(n, indptr, both[:, 1] if both.size else np.zeros(0, np.int64))

    @classmethod
    def from_networkx(cls, g: nx.Graph) -> "Graph":
        return cls.from_edges(g.number_of_nodes(), np.array(list(g.edges()), dtype=np.int64))

    @property
    def degrees(self) -> np.ndarray:
        return self.degree_cache

    @property
    def edge_count(self) -> int:
        return int(self.indices.size // 2)

    def neighbors(self, i: int) -> np.ndarray:
        if not 0 <= i < self.node_count:
            raise IndexError(f"node {i} out of range for graph with {self.node_count} nodes")
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edges(self) -> np.ndarray:
        """Unordered edges as an (E, 2) array with ``i < j``, sorted."""
        src = np.repeat(np.arange(self.node_count), self.degree_cache)
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def edge_sources(self) -> np.ndarray:
        """Row index for each entry of ``indices`` (directed edge i <- j)."""
        return np.repeat(np.arange(self.node_count), self.degree_cache)

    def isolated(self) -> np.ndarray:
        return np.flatnonzero(self.degree_cache == 0)

    def subgraph(self, nodes) -> "Graph":
        """Induced subgraph, relabelled to ``0..len(nodes)-1`` in the given order."""
        nodes = np.asarray(nodes, dtype=np.int64)
        relabel = np.full(self.node_count, -1, dtype=np.int64)
        relabel[nodes] = np.arange(nodes.size)
        e = self.edges()
        e = relabel[e]
        e = e[(e >= 0).all(axis=1)]
        return Graph.from_edges(int(nodes.size), e)

    def to_scipy(self):
        from scipy import sparse

        data = np.ones(self.indices.size)
        return sparse.csr_matrix((data, self.indices, self.indptr),
                                 shape=(self.node_count, self.node_count))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.node_count == other.node_count
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash((self.node_count, self.indices.tobytes()))

    def __repr__(self):
        return f"Graph(N={self.node_count}, E={self.edge_count})"


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise GraphParameterError(f"{name} must lie in [0, 1], got {p}")


def _skip_sampling_ok(*probs) -> bool:
    # networkx's geometric-skip samplers divide by log(1 - p), which is 0 for tiny p
    return all(p <= 0 or p >= 1 or math.log(1 - p) != 0 for p in probs)


def gen_erdos_renyi(n: int, p: float, seed=None) -> Graph:
    """G(n, p) random graph; each unordered pair is an edge independently."""
    if n < 2:
        raise GraphParameterError(f"n must be at least 2, got {n}")
    _check_prob("p", p)
    fast = 0 < p < 1 and _skip_sampling_ok(p)
    g = nx.fast_gnp_random_graph(n, p, seed=seed) if fast else nx.gnp_random_graph(n, p, seed=seed)
    return Graph.from_networkx(g)


def gen_barabasi_albert(n: int, m: int, seed=None) -> Graph:
    """Preferential attachment grown from a complete graph on ``m + 1`` nodes."""
    if not 1 <= m < n:
        raise GraphParameterError(f"need 1 <= m < n, got m={m}, n={n}")
    g = nx.barabasi_albert_graph(n, m, seed=seed, initial_graph=nx.complete_graph(m + 1))
    return Graph.from_networkx(g)


def gen_sbm(n: int, block_sizes, p_in: float, p_out: float, seed=None) -> Graph:
    """Stochastic block model with contiguous blocks of the given sizes."""
    block_sizes = [int(b) for b in block_sizes]
    if sum(block_sizes) != n or any(b <= 0 for b in block_sizes):
        raise GraphParameterError(f"block sizes {block_sizes} do not partition {n} nodes")
    _check_prob("p_in", p_in)
    _check_prob("p_out", p_out)
    k = len(block_sizes)
    probs = [[p_in if a == b else p_out for b in range(k)] for a in range(k)]
    g = nx.stochastic_block_model(block_sizes, probs, seed=seed,
                                sparse=_skip_sampling_ok(p_in, p_out))
    return Graph.from_networkx(nx.convert_node_labels_to_integers(g, ordering="sorted"))


def block_labels(block_sizes) -> np.ndarray:
    return np.repeat(np.arange(len(block_sizes)), block_sizes)


def khop_neighbors(g: Graph, i: int, r: int) -> set[int]:
    """Nodes at shortest-path distance 1..r from ``i`` (``i`` excluded)."""
    if r < 1:
        raise GraphParameterError(f"radius must be >= 1, got {r}")
    if not 0 <= i < g.node_count:
        raise IndexError(f"node {i} out of range")
    dist = {i: 0}
    queue = deque([i])
    while queue:
        u = queue.popleft()
        if dist[u] == r:
            continue
        for v in g.neighbors(u):
            v = int(v)
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    del dist[i]
    return set(dist)


def khop_matrix(g: Graph, r: int):
    """Boolean sparse matrix with (i, j) set iff 1 <= dist(i, j) <= r."""
    from scipy import sparse

    if r < 1:
        raise GraphParameterError(f"radius must be >= 1, got {r}")
    a = g.to_scipy().astype(bool).tocsr()
    reach = a.copy()
    frontier = a
    for _ in range(r - 1):
        frontier = (frontier @ a).astype(bool)
        reach = (reach + frontier).astype(bool)
    reach = reach.tolil()
    reach.setdiag(False)
    reach = reach.tocsr()
    reach.eliminate_zeros()
    return sparse.csr_matrix(reach)


def write_edgelist(g: Graph, path) -> None:
    lines = [f"N={g.node_count}"] + [f"{i} {j}" for i, j in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> Graph:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("N="):
        raise GraphParameterError(f"{path}: missing 'N=<count>' header")
    n = int(text[0][2:])
    edges = [tuple(int(v) for v in line.split()) for line in text[1:] if line.strip()]
    if any(len(e) != 2 for e in edges):
        raise GraphParameterError(f"{path}: each edge line needs exactly two node ids")
    return Graph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
