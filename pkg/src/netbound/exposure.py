"""Exposure mappings: summaries of neighbors' treatments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .netgraph import Graph, khop_matrix

KINDS = ("mean", "weighted_mean", "threshold", "khop_mean")


class ExposureError(ValueError):
    pass


class IsolatedNodeError(ExposureError):
    """A node without neighbors has no defined neighborhood exposure."""

    def __init__(self, nodes):
        self.nodes = np.asarray(nodes)
        super().__init__(f"isolated node(s) {self.nodes[:10].tolist()} have no exposure; "
                         "prune isolates or use a graph without them")


@dataclass(frozen=True, eq=False)
class ExposureSpec:
    """Which mapping g turns a neighborhood treatment vector into z.

    ``weights`` (weighted_mean only) is aligned with ``Graph.indices``:
    entry ``k`` is the weight node ``edge_sources()[k]`` puts on neighbor
    ``indices[k]``. ``None`` means 1/n_i on every neighbor.
    """

    kind: str = "mean"
    c: float = 0.5
    radius: int = 1
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExposureError(f"unknown exposure kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "threshold" and not 0.0 <= self.c <= 1.0:
            raise ExposureError(f"threshold level must lie in [0, 1], got {self.c}")
        if self.kind == "khop_mean" and self.radius < 1:
            raise ExposureError(f"khop radius must be >= 1, got {self.radius}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ExposureError("exposure weights must be finite and nonnegative")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    def describe(self) -> str:
        if self.kind == "threshold":
            return f"threshold(c={self.c:g})"
        if self.kind == "khop_mean":
            return f"khop_mean(r={self.radius})"
        return self.kind


@dataclass(frozen=True)
class ExposureVector:
    values: np.ndarray
    support_kind: str  # "discrete" or "continuous"

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ExposureSupport:
    """Discrete: per-node sorted grids. Continuous: a common interval."""

    kind: str
    grids: Optional[list] = None
    interval: Optional[tuple] = None

    def contains(self, i: int, z: float, tol: float = 1e-9) -> bool:
        if self.kind == "continuous":
            lo, hi = self.interval
            return lo - tol <= z <= hi + tol
        return bool(np.any(np.abs(self.grids[i] - z) <= tol))


def treated_counts(g: Graph, t) -> np.ndarray:
    t = np.asarray(t)
    counts = np.bincount(g.edge_sources(), weights=t[g.indices], minlength=g.node_count)
    return np.rint(counts).astype(np.int64)


def _check_treatment(g: Graph, t) -> np.ndarray:
    t = np.asarray(t)
    if t.shape != (g.node_count,):
        raise ExposureError(f"treatment vector has shape {t.shape}, expected ({g.node_count},)")
    if not np.all((t == 0) | (t == 1)):
        raise ExposureError("treatments must be binary")
    return t.astype(np.int64)


def _uniform_weights(g: Graph) -> np.ndarray:
    deg = g.degree_cache[g.edge_sources()]
    return 1.0 / deg


def apply_exposure(spec: ExposureSpec, g: Graph, t) -> ExposureVector:
    t = _check_treatment(g, t)
    iso = g.isolated()
    if iso.size:
        raise IsolatedNodeError(iso)
    if spec.kind == "mean":
        z = treated_counts(g, t) / g.degree_cache
        return ExposureVector(z, "discrete")
    if spec.kind == "threshold":
        z = (treated_counts(g, t) / g.degree_cache >= spec.c - 1e-12).astype(float)
        return ExposureVector(z, "discrete")
    if spec.kind == "weighted_mean":
        w = _uniform_weights(g) if spec.weights is None else spec.weights
        if w.shape != g.indices.shape:
            raise ExposureError("weights must have one entry per directed edge")
        z = np.bincount(g.edge_sources(), weights=w * t[g.indices], minlength=g.node_count)
        return ExposureVector(z, exposure_support(spec, g).kind)
    reach = khop_matrix(g, spec.radius)
    z = (reach @ t) / np.asarray(reach.sum(axis=1)).ravel()
    return ExposureVector(np.asarray(z, dtype=float), "discrete")


def exposure_support(spec: ExposureSpec, g: Graph) -> ExposureSupport:
    deg = g.degree_cache
    if spec.kind == "threshold":
        return ExposureSupport("discrete", grids=[np.array([0.0, 1.0])] * g.node_count)
    if spec.kind == "mean" or (spec.kind == "weighted_mean" and _is_uniform(spec, g)):
        return ExposureSupport("discrete", grids=[np.arange(n + 1) / n if n else np.zeros(1)
                                                  for n in deg])
    if spec.kind == "khop_mean":
        sizes = np.asarray(khop_matrix(g, spec.radius).sum(axis=1)).ravel()
        return ExposureSupport("discrete", grids=[np.arange(s + 1) / s if s else np.zeros(1)
                                                  for s in sizes])
    totals = np.bincount(g.edge_sources(), weights=spec.weights, minlength=g.node_count)
    return ExposureSupport("continuous", interval=(0.0, float(totals.max(initial=0.0))))


def _is_uniform(spec: ExposureSpec, g: Graph) -> bool:
    if spec.weights is None:
        return True
    return bool(np.allclose(spec.weights, _uniform_weights(g), rtol=0, atol=1e-12))


def perturbed_weights(g: Graph, eps: float, rng) -> np.ndarray:
    """Per-edge weights drawn uniformly from [1/n_i - eps, 1/n_i + eps].

    The slack is capped at 1/n_i so weights stay nonnegative; weights are
    not renormalized.
    """
    base = _uniform_weights(g)
    slack = np.minimum(eps, base)
    return base + rng.uniform(-1.0, 1.0, size=base.size) * slack
