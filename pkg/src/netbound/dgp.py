"""Synthetic network data: covariates, treatments, exposures and outcomes.

The outcome surface is linear in (t, z) with a nonlinear covariate
baseline, ``m(t, z, x) = tau*t + delta*z + gamma*t*z + f(x)``, and the
observed outcome is always generated from the *true* exposure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

from .exposure import ExposureSpec, apply_exposure, perturbed_weights
from .netgraph import Graph

# Table values used throughout the simulation study
BETA_T = 0.8
TAU = 0.8
DELTA = 0.6
GAMMA = 0.2
NOISE_SD = 1.0


@dataclass(frozen=True)
class DgpConfig:
    d: int = 1
    beta_t: Optional[tuple] = None
    tau: float = TAU
    delta: float = DELTA
    gamma: float = GAMMA
    noise_sd: float = NOISE_SD
    spec_true: ExposureSpec = field(default_factory=ExposureSpec)
    spec_assumed: ExposureSpec = field(default_factory=ExposureSpec)
    # slack for the per-edge weights of a weighted_mean true mapping
    weight_eps: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"covariate dimension must be >= 1, got {self.d}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be nonnegative, got {self.noise_sd}")
        if self.beta_t is None:
            object.__setattr__(self, "beta_t", tuple([BETA_T / np.sqrt(self.d)] * self.d))
        if len(self.beta_t) != self.d:
            raise ValueError("beta_t length must equal d")

    @property
    def beta(self) -> np.ndarray:
        return np.asarray(self.beta_t, dtype=float)

    def with_seed(self, seed: int) -> "DgpConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    t: np.ndarray
    z_true: np.ndarray
    z_assumed: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        if any(len(a) != n for a in (self.x, self.z_true, self.z_assumed, self.y)):
            raise ValueError("all dataset columns must have the same length")

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def rows(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.t[idx], self.z_true[idx], self.z_assumed[idx], self.y[idx])


def baseline(x) -> np.ndarray:
    """Covariate baseline f, applied per coordinate and summed."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return (0.6 * np.tanh(x) + 0.4 * np.sin(x) - 0.2 * x ** 2).sum(axis=1)


def sample_covariates(n: int, d: int, seed=None) -> np.ndarray:
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, d))


def true_propensity(x, beta_t) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return expit(x @ np.asarray(beta_t, dtype=float))


def assign_treatments(x, beta_t, seed=None) -> np.ndarray:
    p = true_propensity(x, beta_t)
    return (np.random.default_rng(seed).uniform(size=p.shape) < p).astype(np.int64)


def outcome_mean(t, z, x, config: DgpConfig = None) -> np.ndarray:
    cfg = config or DgpConfig(d=np.atleast_2d(x).shape[1])
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    return cfg.tau * t + cfg.delta * z + cfg.gamma * t * z + baseline(x)


def simulate(config: DgpConfig, g: Graph) -> Dataset:
    """Draw one dataset on ``g``; ``y`` depends on the true exposure only."""
    ss = np.random.SeedSequence(config.seed)
    s_x, s_t, s_w, s_y = ss.spawn(4)
    x = sample_covariates(g.node_count, config.d, np.random.default_rng(s_x))
    t = assign_treatments(x, config.beta, np.random.default_rng(s_t))
    spec_true = realize_true_spec(config, g, np.random.default_rng(s_w))
    z_true = apply_exposure(spec_true, g, t).values
    z_assumed = apply_exposure(config.spec_assumed, g, t).values
    noise = np.random.default_rng(s_y).normal(0.0, 1.0, size=g.node_count) * config.noise_sd
    y = outcome_mean(t, z_true, x, config) + noise
    return Dataset(x, t, z_true, z_assumed, y)


def realize_true_spec(config: DgpConfig, g: Graph, rng) -> ExposureSpec:
    spec = config.spec_true
    if spec.kind == "weighted_mean" and spec.weights is None and config.weight_eps > 0:
        return replace(spec, weights=perturbed_weights(g, config.weight_eps, rng))
    return spec


def true_effects(config: DgpConfig, t=1, z=0.0, t_prime=0, z_prime=0.0) -> dict:
    """Closed-form direct, spillover and overall effects; free of x."""
    def m(tt, zz):
        return config.tau * tt + config.delta * zz + config.gamma * tt * zz

    return {
        "direct": m(t, z) - m(t_prime, z),
        "spillover": m(t, z) - m(t, z_prime),
        "overall": m(t, z) - m(t_prime, z_prime),
    }


CSV_FLOAT = "{:.17g}"


def save_dataset(data: Dataset, path) -> None:
    header = ["node_id"] + [f"x_{k}" for k in range(data.d)] + ["t", "z_true", "z_assumed", "y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.n):
            w.writerow([i] + [CSV_FLOAT.format(v) for v in data.x[i]]
                       + [int(data.t[i]), CSV_FLOAT.format(data.z_true[i]),
                          CSV_FLOAT.format(data.z_assumed[i]), CSV_FLOAT.format(data.y[i])])


def load_dataset(path) -> Dataset:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    xcols = [k for k, h in enumerate(header) if h.startswith("x_")]
    col = {h: k for k, h in enumerate(header)}
    for name in ("node_id", "t", "z_true", "z_assumed", "y"):
        if name not in col:
            raise ValueError(f"{path}: missing column {name!r}")
    arr = np.array(rows, dtype=object)
    ids = arr[:, col["node_id"]].astype(np.int64)
    order = np.argsort(ids)
    arr = arr[order]
    return Dataset(
        x=arr[:, xcols].astype(float).reshape(len(arr), len(xcols)),
        t=arr[:, col["t"]].astype(np.int64),
        z_true=arr[:, col["z_true"]].astype(float),
        z_assumed=arr[:, col["z_assumed"]].astype(float),
        y=arr[:, col["y"]].astype(float),
    )
