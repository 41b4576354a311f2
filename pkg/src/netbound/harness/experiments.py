"""Experiment drivers: validity, convergence and width studies."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from ..dgp import DgpConfig, outcome_mean, simulate, true_effects
from ..estimator import effect_bounds, estimate_apo_bounds, estimate_capo_bounds, estimate_target, plugin_estimate
from ..learners import CrossFitter, count_pmfs, exposure_sets
from ..netgraph import gen_barabasi_albert, gen_erdos_renyi, gen_sbm
from ..oracle import normal_bounds
from ..sensitivity import node_ratio_bounds
from ..dgp import true_propensity
from .config import ExperimentConfig

COLUMNS = ("run", "factor", "scenario", "estimand", "t", "z", "t_prime", "z_prime",
           "lo", "hi", "truth", "covered", "width", "seconds")


@dataclass
class ResultRecord:
    run: int
    factor: float
    scenario: str
    estimand: str
    t: int
    z: float
    t_prime: int
    z_prime: float
    lo: float
    hi: float
    truth: float
    covered: bool
    width: float
    seconds: float

    @classmethod
    def make(cls, run, factor, scenario, estimand, t, z, lo, hi, truth, seconds, t_prime=-1, z_prime=float("nan")):
        return cls(int(run), float(factor), scenario, estimand, int(t), float(z), int(t_prime), float(z_prime),
                   float(lo), float(hi), float(truth), bool(lo <= truth <= hi), float(hi - lo),
                   round(float(seconds), 3))


# ------------------------------------------------------------------ plumbing

def resolve_workers(workers=None) -> int:
    if workers is None:
        workers = int(os.environ.get("NETBOUND_WORKERS", "1") or 1)
    return max(1, int(workers))


def _map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def run_seeds(seed, *key) -> tuple:
    """Independent integer seeds (graph, data, folds) for one run."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return tuple(int(s) for s in ss.generate_state(3))


def build_graph(cfg: ExperimentConfig, n: int, seed: int):
    net = cfg.network
    gen = net.get("generator", "erdos_renyi")
    if gen == "erdos_renyi":
        g = gen_erdos_renyi(n, float(net.get("p", 0.01)), seed)
    elif gen == "barabasi_albert":
        g = gen_barabasi_albert(n, int(net.get("m", 3)), seed)
    elif gen == "sbm":
        k = int(net.get("blocks", 4))
        sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
        g = gen_sbm(n, sizes, float(net.get("p_in", 0.01)), float(net.get("p_out", 0.0005)), seed)
    else:
        raise ValueError(f"unknown network generator {gen!r}")
    keep = np.flatnonzero(g.degrees > 0)
    return g.subgraph(keep) if keep.size < g.node_count else g


def build_data(cfg: ExperimentConfig, g, seed):
    spec_true, spec_assumed = cfg.exposure_specs()
    dgp = DgpConfig(d=cfg.d, spec_true=spec_true, spec_assumed=spec_assumed,
                    weight_eps=float(cfg.dgp.get("weight_eps", 0.0)),
                    noise_sd=float(cfg.dgp.get("noise_sd", 1.0)), seed=seed)
    return dgp, simulate(dgp, g)


def make_crossfitter(cfg, data, g, seed):
    _, spec_assumed = cfg.exposure_specs()
    return CrossFitter(data, g, spec_assumed, cfg.K, seed, cfg.learner("propensity"),
                       cfg.learner("outcome"), cfg.eps_clip)


# --------------------------------------------------------------- validity

def _validity_run(cfg: ExperimentConfig, run: int) -> list:
    gs, ds, fs = run_seeds(cfg.seed, run)
    g = build_graph(cfg, cfg.n_nodes[0], gs)
    dgp, data = build_data(cfg, g, ds)
    cf = make_crossfitter(cfg, data, g, fs)
    xg = np.asarray(cfg.x_grid, float).reshape(-1, 1) if cfg.x_grid else None
    records = []
    for factor in cfg.factors:
        model = cfg.misspec_model(factor)
        for z in cfg.z_values:
            pos = {}
            for t in (1, 0):
                start = time.perf_counter()
                po = estimate_target(cf, t, z, model)
                pos[t] = po
                apo = estimate_apo_bounds(po.phi_plus, po.phi_minus)
                truth = float(np.mean(outcome_mean(t, z, data.x[po.active], dgp)))
                secs = time.perf_counter() - start
                records.append(ResultRecord.make(run, factor, cfg.scenario, "apo", t, z, apo.lo, apo.hi, truth, secs))
                if xg is not None:
                    act = po.active
                    capo = estimate_capo_bounds(data.x[act], po.phi_plus[act], po.phi_minus[act],
                                                cfg.learner("second_stage"))
                    lo, hi = capo.predict(xg)
                    mu = outcome_mean(t, z, xg, dgp)
                    for i in range(len(xg)):
                        records.append(ResultRecord.make(run, factor, cfg.scenario, f"capo(x={xg[i, 0]:g})",
                                                         t, z, lo[i], hi[i], mu[i], 0.0))
            eff = effect_bounds("direct", pos[1], pos[0])
            truth = true_effects(dgp, 1, z, 0, z)["direct"]
            records.append(ResultRecord.make(run, factor, cfg.scenario, "ade", 1, z, eff.lo, eff.hi, truth,
                                             0.0, 0, z))
    return records


def run_validity(cfg: ExperimentConfig, workers=None):
    records = _collect(_validity_run, cfg, [(r,) for r in range(cfg.runs)], workers)
    return records, summarize(records)


# ------------------------------------------------------------ convergence

def oracle_apo_bounds(cfg, dgp, data, g, t, z):
    """Sharp APO bounds from the true outcome law and true ratio bounds."""
    _, spec_assumed = cfg.exposure_specs()
    sets = exposure_sets(g, spec_assumed)
    pmfs = count_pmfs(sets, true_propensity(data.x, dgp.beta))
    bm, bp, att = node_ratio_bounds(cfg.misspec_model(1.0), z, np.array([len(s) for s in sets]), pmfs)
    lo, hi = normal_bounds(outcome_mean(t, z, data.x, dgp), dgp.noise_sd,
                           np.where(att, bm, 1.0), np.where(att, bp, 1.0))
    return float(np.mean(lo[att])), float(np.mean(hi[att]))


def _convergence_run(cfg: ExperimentConfig, n_index: int, run: int) -> list:
    n = cfg.n_nodes[n_index]
    gs, ds, fs = run_seeds(cfg.seed, n_index, run)
    g = build_graph(cfg, n, gs)
    dgp, data = build_data(cfg, g, ds)
    cf = make_crossfitter(cfg, data, g, fs)
    z = cfg.z_values[0]
    model = cfg.misspec_model(1.0)
    records = []
    pos = {}
    for t in (1, 0):
        start = time.perf_counter()
        po = estimate_target(cf, t, z, model)
        pos[t] = po
        secs = time.perf_counter() - start
        o_lo, o_hi = oracle_apo_bounds(cfg, dgp, data, g, t, z)
        orth = estimate_apo_bounds(po.phi_plus, po.phi_minus)
        plug = plugin_estimate(po)
        truth = float(np.mean(outcome_mean(t, z, data.x, dgp)))
        for arm, r in (("orthogonal", orth), ("plugin", plug)):
            records.append(ResultRecord.make(run, 1.0, cfg.scenario, f"apo[{arm}]@N={n}", t, z, r.lo, r.hi,
                                             truth, secs))
        records.append(ResultRecord.make(run, 1.0, cfg.scenario, f"apo[oracle]@N={n}", t, z, o_lo, o_hi, truth, 0.0))
    truth = true_effects(dgp, 1, z, 0, z)["direct"]
    for arm, plugin in (("orthogonal", False), ("plugin", True)):
        e = effect_bounds("direct", pos[1], pos[0], plugin=plugin)
        records.append(ResultRecord.make(run, 1.0, cfg.scenario, f"ade[{arm}]@N={n}", 1, z, e.lo, e.hi, truth,
                                         0.0, 0, z))
    return records


def convergence_errors(records) -> dict:
    """Per (N, run): mean absolute error of the four APO endpoints against the oracle."""
    table = {}
    for r in records:
        if r.estimand.startswith("apo["):
            name, n = r.estimand.split("@N=")
            table.setdefault((int(n), r.run), {})[(name, r.t)] = (r.lo, r.hi)
    out = {}
    for (n, run), row in sorted(table.items()):
        errs = {}
        for arm in ("orthogonal", "plugin"):
            e = [abs(row[(f"apo[{arm}]", t)][k] - row[("apo[oracle]", t)][k]) for t in (0, 1) for k in (0, 1)]
            errs[arm] = float(np.mean(e))
        out.setdefault(int(n), []).append({"run": run, **errs})
    return out


def run_convergence(cfg: ExperimentConfig, workers=None):
    tasks = [(i, r) for i in range(len(cfg.n_nodes)) for r in range(cfg.runs)]
    records = _collect(_convergence_run, cfg, tasks, workers)
    errs = convergence_errors(records)
    ns = sorted(errs)
    mean_orth = [float(np.mean([e["orthogonal"] for e in errs[n]])) for n in ns]
    mean_plug = [float(np.mean([e["plugin"] for e in errs[n]])) for n in ns]
    largest = errs[ns[-1]]
    summary = summarize(records)
    summary["convergence"] = {
        "n_nodes": ns, "mae_orthogonal": mean_orth, "mae_plugin": mean_plug,
        "orthogonal_wins_at_largest": int(sum(e["orthogonal"] < e["plugin"] for e in largest)),
        "runs_at_largest": len(largest),
        "spearman_orthogonal": float(spearmanr(ns, mean_orth)[0]) if len(ns) > 1 else float("nan"),
        "per_run": {str(n): errs[n] for n in ns},
    }
    return records, summary


# ------------------------------------------------------------------ width

def _width_run(cfg: ExperimentConfig, run: int) -> list:
    gs, ds, fs = run_seeds(cfg.seed, run)
    g = build_graph(cfg, cfg.n_nodes[0], gs)
    dgp, data = build_data(cfg, g, ds)
    cf = make_crossfitter(cfg, data, g, fs)
    y_range = float(data.y.max() - data.y.min())
    records = []
    for factor in cfg.factors:
        model = cfg.misspec_model(factor)
        for z in cfg.z_values:
            start = time.perf_counter()
            a = estimate_target(cf, 1, z, model)
            b = estimate_target(cf, 0, z, model)
            e = effect_bounds("direct", a, b)
            truth = true_effects(dgp, 1, z, 0, z)["direct"]
            secs = time.perf_counter() - start
            records.append(ResultRecord.make(run, factor, cfg.scenario, "ade", 1, z, e.lo, e.hi, truth, secs, 0, z))
            records.append(ResultRecord.make(run, factor, cfg.scenario, "outcome_range", 1, z, 0.0, y_range,
                                             y_range, 0.0, 0, z))
    return records


def width_summary(records) -> dict:
    out = {}
    ranges = {(r.run, r.factor, r.z): r.hi for r in records if r.estimand == "outcome_range"}
    for factor in sorted({r.factor for r in records}):
        ade = [r for r in records if r.estimand == "ade" and r.factor == factor]
        rel = [r.width / ranges[(r.run, r.factor, r.z)] for r in ade]
        out[str(factor)] = {
            "mean_relative_width": float(np.mean(rel)), "sd_relative_width": float(np.std(rel)),
            "share_excluding_zero": float(np.mean([(r.lo > 0) or (r.hi < 0) for r in ade])),
            "share_positive": float(np.mean([r.lo > 0 for r in ade])),
            "intervals": len(ade),
        }
    return out


def run_width(cfg: ExperimentConfig, workers=None):
    records = _collect(_width_run, cfg, [(r,) for r in range(cfg.runs)], workers)
    summary = summarize(records)
    summary["width"] = width_summary(records)
    return records, summary


# ---------------------------------------------------------------- shared

def _collect(fn, cfg, tasks, workers):
    out = _map(fn, [(cfg, *t) for t in tasks], resolve_workers(workers))
    records = [r for chunk in out for r in chunk]
    records.sort(key=lambda r: (r.run, r.factor))
    return records


def run_experiment(cfg: ExperimentConfig, workers=None):
    drivers = {"validity": run_validity, "convergence": run_convergence, "width": run_width}
    return drivers[cfg.experiment](cfg, workers)


def summarize(records) -> dict:
    """Coverage and mean width per (factor, estimand family)."""
    groups = {}
    for r in records:
        family = r.estimand.split("(")[0]
        groups.setdefault((r.factor, family), []).append(r)
    rows = []
    for (factor, family), rs in sorted(groups.items()):
        rows.append({"factor": factor, "estimand": family, "n": len(rs),
                     "coverage": float(np.mean([r.covered for r in rs])),
                     "mean_width": float(np.mean([r.width for r in rs]))})
    return {"groups": rows}


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else repr(v))
    return str(v)


def emit_results(records, path, fmt="csv", summary=None) -> list:
    """Write records (CSV or JSON) plus a JSON summary next to them."""
    path = Path(path)
    written = []
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in records:
                row = list(astuple(r))
                row[-1] = f"{r.seconds:.3f}"
                w.writerow([_fmt(v) if i < len(COLUMNS) - 1 else v for i, v in enumerate(row)])
    elif fmt == "json":
        payload = [{c: getattr(r, c) for c in COLUMNS} for r in records]
        path.write_text(json.dumps(payload, indent=1, allow_nan=True) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    written.append(path)
    summary = summary if summary is not None else summarize(records)
    spath = path.with_suffix(".summary.json")
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=True) + "\n")
    written.append(spath)
    return written


def read_results(path) -> list:
    path = Path(path)
    types = {f.name: f.type for f in fields(ResultRecord)}
    if path.suffix == ".json":
        rows = json.loads(path.read_text())
    else:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        vals = {}
        for c in COLUMNS:
            v = row[c]
            kind = types[c]
            if kind == "bool":
                vals[c] = v in (True, "1", "True", "true")
            elif kind == "int":
                vals[c] = int(v)
            elif kind == "float":
                vals[c] = float(v)
            else:
                vals[c] = str(v)
        out.append(ResultRecord(**vals))
    return out
