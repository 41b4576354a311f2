"""Experiment configuration: INI-style files or JSON with the same sections."""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..exposure import ExposureSpec
from ..learners import EPS_CLIP, LearnerSpec
from ..sensitivity import MisspecModel

SCENARIOS = ("weighted_mean", "threshold", "higher_order")
EXPERIMENTS = ("validity", "convergence", "width")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "validity"
    scenario: str = "weighted_mean"
    n_nodes: list = field(default_factory=lambda: [1000])
    d: int = 1
    network: dict = field(default_factory=dict)
    dgp: dict = field(default_factory=dict)
    misspec: dict = field(default_factory=dict)
    factors: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    z_values: list = field(default_factory=lambda: [0.5])
    x_grid: list = field(default_factory=list)
    K: int = 5
    eps_clip: float = EPS_CLIP
    learners: dict = field(default_factory=dict)
    runs: int = 10
    seed: int = 0
    output: str = "results.csv"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not self.factors or any(f < 0 for f in self.factors):
            raise ConfigError("factor list must be nonempty and nonnegative")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not self.n_nodes or any(n < 2 for n in self.n_nodes):
            raise ConfigError("n_nodes must list node counts >= 2")

    def learner(self, role: str) -> LearnerSpec:
        return LearnerSpec(**self.learners.get(role, {}))

    def misspec_model(self, factor=1.0) -> MisspecModel:
        m = dict(self.misspec)
        return MisspecModel(**m, factor=factor)

    def exposure_specs(self):
        true = ExposureSpec(**self.dgp.get("spec_true", {}))
        assumed = ExposureSpec(**self.dgp.get("spec_assumed", {}))
        return true, assumed

    def with_seed(self, seed) -> "ExperimentConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return asdict(self)


def scenario_defaults(scenario: str, experiment: str = None) -> ExperimentConfig:
    """Defaults for each scenario; values not fixed by the design table are marked."""
    if scenario == "weighted_mean":
        return ExperimentConfig(
            experiment=experiment or "validity", scenario=scenario, n_nodes=[1000], d=1,
            network={"generator": "erdos_renyi", "p": 0.01},
            dgp={"spec_true": {"kind": "weighted_mean"}, "spec_assumed": {"kind": "mean"}, "weight_eps": 0.03},
            misspec={"kind": "weighted_mean", "eps": 0.03},
            factors=[0.5, 1.0, 2.0], z_values=[0.5], x_grid=[-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8],
            K=5, learners={"propensity": {"kind": "binned", "bins": 10},
                           "outcome": {"kind": "binned", "bins": 5},
                           "second_stage": {"kind": "poly", "degree": 2}},
            runs=10, seed=2024)
    if scenario == "threshold":
        return ExperimentConfig(
            experiment=experiment or "convergence", scenario=scenario, n_nodes=[500, 1000, 2000, 4000], d=6,
            network={"generator": "barabasi_albert", "m": 3},
            dgp={"spec_true": {"kind": "threshold", "c": 0.45}, "spec_assumed": {"kind": "threshold", "c": 0.5}},
            misspec={"kind": "threshold", "eps": 0.05, "c": 0.5},
            factors=[1.0], z_values=[1.0], K=2,
            learners={"propensity": {"kind": "gbt", "depth": 2, "trees": 100},
                      "outcome": {"kind": "gbt", "depth": 2, "trees": 100, "min_leaf": 20},
                      "second_stage": {"kind": "gbt", "depth": 2}},
            runs=10, seed=7)
    if scenario == "higher_order":
        return ExperimentConfig(
            experiment=experiment or "width", scenario=scenario, n_nodes=[3000], d=1,
            network={"generator": "sbm", "blocks": 4, "p_in": 0.01, "p_out": 0.0005},
            dgp={"spec_true": {"kind": "khop_mean", "radius": 2}, "spec_assumed": {"kind": "mean"}},
            misspec={"kind": "msm", "gamma_minus": 0.8, "gamma_plus": 1.25},
            factors=[1.0], z_values=[0.25, 0.5, 0.75], K=5,
            learners={"propensity": {"kind": "binned", "bins": 10},
                      "outcome": {"kind": "binned", "bins": 5},
                      "second_stage": {"kind": "poly", "degree": 2}},
            runs=10, seed=11)
    raise ConfigError(f"unknown scenario {scenario!r}")


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [_parse_value(v) for v in text.split(",") if v.strip()]
    return text


def _merge(cfg: ExperimentConfig, raw: dict) -> ExperimentConfig:
    updates = {}
    known = set(ExperimentConfig.__dataclass_fields__)
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key in ("network", "dgp", "misspec", "learners"):
            merged = dict(getattr(cfg, key))
            if key == "misspec" and "kind" in value and value["kind"] != merged.get("kind"):
                merged = {}
            merged.update(value)
            value = merged
        if key in ("n_nodes", "factors", "z_values", "x_grid") and not isinstance(value, list):
            value = [value]
        updates[key] = value
    return replace(cfg, **updates)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    scenario = raw.get("scenario", "weighted_mean")
    base = scenario_defaults(scenario, raw.get("experiment"))
    return _merge(base, raw)


def _ini_to_dict(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    cp.read_string(text)
    raw = {}
    for section in cp.sections():
        items = {k: _parse_value(v) for k, v in cp.items(section)}
        if section == "experiment":
            raw.update(items)
        elif section in ("network", "dgp", "misspec"):
            if section == "dgp":
                for which in ("spec_true", "spec_assumed"):
                    sub = {k.split(".", 1)[1]: items.pop(k) for k in list(items) if k.startswith(which + ".")}
                    if sub:
                        items[which] = sub
            raw[section] = items
        elif section.startswith("learner."):
            raw.setdefault("learners", {})[section.split(".", 1)[1]] = items
        else:
            raise ConfigError(f"unknown config section [{section}]")
    return raw


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = _ini_to_dict(text)
    return config_from_dict(raw)
