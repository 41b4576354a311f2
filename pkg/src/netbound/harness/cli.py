"""Command-line entry point: ``netbound <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict

import numpy as np

from .. import __version__
from ..dgp import DgpConfig, load_dataset, save_dataset, simulate
from ..estimator import estimate_bounds
from ..exposure import KINDS, ExposureSpec
from ..learners import LEARNER_KINDS, CrossFitter, LearnerSpec
from ..netgraph import read_edgelist, write_edgelist
from ..sensitivity import MODEL_KINDS, READINGS, MisspecModel
from .config import ExperimentConfig, load_config, scenario_defaults
from .experiments import build_graph, emit_results, run_experiment, summarize
from .studies import oracle_agreement

ORACLE_TOL = 1e-6


def _add_common(p, out_required=False):
    p.add_argument("--out", required=out_required, help="output path")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="netbound", description="Bounds on network potential outcomes "
                                 "under a misspecified exposure mapping.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a random graph and write an edge list")
    p.add_argument("--generator", choices=("erdos_renyi", "barabasi_albert", "sbm"), default="erdos_renyi")
    p.add_argument("--nodes", type=int, default=1000)
    p.add_argument("--p", type=float, default=0.01, help="edge probability (erdos_renyi)")
    p.add_argument("--m", type=int, default=3, help="edges per new node (barabasi_albert)")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--p-in", type=float, default=0.01)
    p.add_argument("--p-out", type=float, default=0.0005)
    _add_common(p, out_required=True)

    p = sub.add_parser("simulate", help="simulate a dataset on an edge-list graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--true-kind", choices=KINDS, default="mean")
    p.add_argument("--assumed-kind", choices=KINDS, default="mean")
    p.add_argument("--c", type=float, default=0.5, help="threshold level for both mappings")
    p.add_argument("--true-c", type=float, default=None, help="threshold level of the true mapping")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--weight-eps", type=float, default=0.0)
    _add_common(p, out_required=True)

    p = sub.add_parser("estimate", help="bounds for one target (t, z) on a saved dataset")
    p.add_argument("--graph", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--assumed-kind", choices=KINDS, default="mean")
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--model", choices=MODEL_KINDS, default="msm")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--gamma-minus", type=float, default=0.5)
    p.add_argument("--gamma-plus", type=float, default=2.0)
    p.add_argument("--factor", type=float, default=1.0)
    p.add_argument("--reading", choices=READINGS, default="cumulative")
    p.add_argument("--learner", choices=LEARNER_KINDS, default="binned")
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--x-grid", type=float, nargs="*", default=())
    p.add_argument("--contrast", type=float, nargs=2, metavar=("T_PRIME", "Z_PRIME"), action="append",
                   default=[])
    _add_common(p)

    p = sub.add_parser("experiment", help="run a configured experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("oracle-check", help="agreement of the three sharp-bound computations")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)

    sub.add_parser("version", help="print the package version")
    return ap


def _cmd_generate(args):
    cfg = ExperimentConfig(network={"generator": args.generator, "p": args.p, "m": args.m, "blocks": args.blocks,
                                    "p_in": args.p_in, "p_out": args.p_out})
    g = build_graph(cfg, args.nodes, args.seed)
    write_edgelist(g, args.out)
    print(f"wrote {g.node_count} nodes, {g.edge_count} edges to {args.out}")


def _cmd_simulate(args):
    g = read_edgelist(args.graph)
    true_c = args.c if args.true_c is None else args.true_c
    cfg = DgpConfig(d=args.d, spec_true=ExposureSpec(args.true_kind, c=true_c, radius=args.radius),
                    spec_assumed=ExposureSpec(args.assumed_kind, c=args.c, radius=args.radius),
                    weight_eps=args.weight_eps, seed=args.seed)
    save_dataset(simulate(cfg, g), args.out)
    print(f"wrote {g.node_count} rows to {args.out}")


def _contrast_kind(t, z, tp, zp) -> str:
    if tp != t and zp == z:
        return "direct"
    if tp == t and zp != z:
        return "spillover"
    return "overall"


def _cmd_estimate(args):
    g = read_edgelist(args.graph)
    data = load_dataset(args.data)
    spec = ExposureSpec(args.assumed_kind, c=args.c, radius=args.radius)
    misspec = MisspecModel(args.model, eps=args.eps, c=args.c, gamma_minus=args.gamma_minus,
                           gamma_plus=args.gamma_plus, factor=args.factor, reading=args.reading)
    learner = LearnerSpec(kind=args.learner, seed=args.seed)
    cf = CrossFitter(data, g, spec, args.K, args.seed, learner, learner)
    grid = np.asarray(args.x_grid, float).reshape(-1, 1) if args.x_grid else None
    second = LearnerSpec(kind="poly") if data.d == 1 else LearnerSpec(kind="gbt", seed=args.seed)
    result = estimate_bounds(cf, misspec, args.t, args.z, grid, second,
                             contrasts=[(_contrast_kind(args.t, args.z, int(tp), zp), int(tp), zp)
                                        for tp, zp in args.contrast])
    text = result.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _deviations(cfg: ExperimentConfig) -> list:
    base = asdict(scenario_defaults(cfg.scenario, cfg.experiment))
    mine = asdict(cfg)
    skip = {"output", "seed", "experiment"}
    return [f"{k}={mine[k]!r} (default {base[k]!r})" for k in base if k not in skip and mine[k] != base[k]]


def _cmd_experiment(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = args.out or cfg.output
    print(f"# experiment={cfg.experiment} scenario={cfg.scenario} runs={cfg.runs} seed={cfg.seed}")
    for line in _deviations(cfg):
        print(f"# deviation from defaults: {line}")
    records, summary = run_experiment(cfg, args.workers)
    summary = {**summarize(records), **(summary or {})}
    paths = emit_results(records, out, args.format, summary)
    for row in summary["groups"]:
        print(f"factor={row['factor']:g} {row['estimand']}: coverage={row['coverage']:.3f} "
              f"mean_width={row['mean_width']:.4f} (n={row['n']})")
    print("wrote " + ", ".join(str(p) for p in paths))


def _cmd_oracle_check(args):
    res = oracle_agreement(args.instances, args.seed)
    print(f"max deviation over {args.instances} instances: {res['max_deviation']:.3e}")
    return 0 if res["max_deviation"] < ORACLE_TOL else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    handlers = {"generate": _cmd_generate, "simulate": _cmd_simulate, "estimate": _cmd_estimate,
                "experiment": _cmd_experiment, "oracle-check": _cmd_oracle_check}
    if args.command == "version":
        print(__version__)
        return 0
    try:
        status = handlers[args.command](args)
    except (OSError, ValueError, RuntimeError, KeyError) as err:
        print(f"netbound {args.command}: error: {err}", file=sys.stderr)
        return 1
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
