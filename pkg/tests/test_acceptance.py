"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one ``[criterion N] PASS|FAIL`` line with its measured
numbers and wall time. Run with ``pytest tests/test_acceptance.py -s`` to
see them inline; they also appear in the captured output of ``-v`` runs.
"""

import csv
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from netbound.harness.config import load_config
from netbound.harness.experiments import run_experiment
from netbound.harness.studies import (collapse_and_limits, exposure_exactness, oracle_agreement,
                                      run_kernel_consistency, run_orthogonality, run_unbiasedness)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, seconds, budget=None):
        timing = f"{seconds:.1f}s" + (f" (budget {budget:.0f}s)" if budget else "")
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}; {timing}")
    return emit


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def test_c01_sharp_bound_triangulation(report):
    res, secs = timed(oracle_agreement, 200, seed=1)
    ok = res["max_deviation"] < 1e-6 and secs < 30
    report(1, ok, f"max deviation {res['max_deviation']:.2e} over 200 instances (tol 1e-6)", secs, 30)
    assert ok


def test_c02_collapse_and_limits(report):
    res, secs = timed(collapse_and_limits, seed=0)
    ok = (res["collapse_error"] < 1e-10 and res["upper_monotone"] and res["lower_monotone"]
          and res["upper_limit_gap"] < 1e-5 and res["lower_limit_gap"] < 1e-5)
    report(2, ok, f"|identity bound - AIPW| = {res['collapse_error']:.1e} (tol 1e-10); upper path monotone "
                  f"{res['upper_monotone']} ending {res['upper_limit_gap']:.1e} below max support; lower path "
                  f"monotone {res['lower_monotone']} ending {res['lower_limit_gap']:.1e} above min support", secs)
    assert ok


def test_c03_pseudo_outcome_unbiasedness(report):
    res, secs = timed(run_unbiasedness, n=5000, seed=0)
    gap = abs(res["mean_phi_plus"] - res["psi_plus"])
    ok = gap < 3 * res["se_plus"] and secs < 60
    report(3, ok, f"|mean phi+ - psi+| = {gap:.4f} vs 3 SE = {3 * res['se_plus']:.4f} at N={res['n']}", secs, 60)
    assert ok


def test_c04_orthogonality_scaling(report):
    res, secs = timed(run_orthogonality, n=5000, seeds=50, deltas=(0.05, 0.1, 0.2), seed=0)
    q, joint = res["q/orthogonal"]["slope"], res["joint/orthogonal"]["slope"]
    ok = 1.5 <= q <= 2.5 and 1.5 <= joint <= 2.5 and secs < 600
    report(4, ok, f"log-log slope Q-perturbation {q:.2f}, joint (pi, gamma) {joint:.2f} (range [1.5, 2.5]); "
                  f"plug-in joint slope {res['joint/plugin']['slope']:.2f} for contrast", secs, 600)
    assert ok


@pytest.fixture(scope="module")
def validity():
    out, secs = timed(run_experiment, load_config(CONFIGS / "validity.cfg"))
    return out, secs


def _coverage(records, factor, family="capo"):
    rs = [r for r in records if r.factor == factor and r.estimand.startswith(family)]
    return float(np.mean([r.covered for r in rs]))


def test_c05_validity(report, validity):
    (records, _), secs = validity
    hi, lo = _coverage(records, 2.0), _coverage(records, 0.5)
    ok = hi >= 0.95 and lo < hi and secs < 600
    report(5, ok, f"CAPO coverage factor 2.0 = {hi:.3f} (>= 0.95), factor 0.5 = {lo:.3f} (< factor 2.0); "
                  f"factor 1.0 = {_coverage(records, 1.0):.3f}", secs, 600)
    assert ok


def test_c06_convergence(report):
    (_, summary), secs = timed(run_experiment, load_config(CONFIGS / "convergence.cfg"))
    conv = summary["convergence"]
    wins, runs, rho = conv["orthogonal_wins_at_largest"], conv["runs_at_largest"], conv["spearman_orthogonal"]
    ok = wins >= 8 and runs == 10 and rho < 0 and secs < 1800
    mae = ", ".join(f"N={n}: {o:.3f}/{p:.3f}" for n, o, p in
                    zip(conv["n_nodes"], conv["mae_orthogonal"], conv["mae_plugin"]))
    report(6, ok, f"orthogonal beats plug-in at N={conv['n_nodes'][-1]} in {wins}/{runs} seeds (>= 8); "
                  f"Spearman rho {rho:.2f} (< 0); MAE orthogonal/plug-in {mae}", secs, 1800)
    assert ok


def test_c07_width(report):
    (_, summary), secs = timed(run_experiment, load_config(CONFIGS / "width.cfg"))
    w = summary["width"]["1.0"]
    ok = w["mean_relative_width"] < 0.20 and w["share_positive"] >= 0.90 and secs < 600
    report(7, ok, f"mean relative ADE width {w['mean_relative_width']:.4f} (< 0.20, sd "
                  f"{w['sd_relative_width']:.4f}); share of intervals with lower end > 0 "
                  f"{w['share_positive']:.2f} (>= 0.90)", secs, 600)
    assert ok


def test_c08_kernel_consistency(report):
    res, secs = timed(run_kernel_consistency, n=8000, seeds=50, bandwidths=(0.2, 0.1, 0.05), seed=0)
    ok = res["share_improved"] >= 0.80 and secs < 600
    devs = ", ".join(f"h={h}: {d:.3f}" for h, d in zip(res["bandwidths"], res["mean_abs_dev"]))
    report(8, ok, f"deviation smaller at h=0.05 than h=0.2 in {res['share_improved']:.0%} of 50 seeds (>= 80%); "
                  f"mean |deviation| {devs}", secs, 600)
    assert ok


def test_c09_exposure_exactness(report):
    res, secs = timed(exposure_exactness, graphs=20, max_degree=12, seed=0)
    ok = res["max_deviation"] <= 1e-12 and res["nodes_checked"] > 0 and secs < 60
    report(9, ok, f"max |analytic - enumerated| = {res['max_deviation']:.1e} over {res['nodes_checked']} nodes "
                  f"on 20 graphs (tol 1e-12)", secs, 60)
    assert ok


def _rows_without_seconds(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    col = rows[0].index("seconds")
    return [r[:col] + r[col + 1:] for r in rows]


def test_c10_determinism(report, tmp_path):
    start = time.perf_counter()
    paths = []
    for k in range(2):
        out = tmp_path / f"run{k}.csv"
        proc = subprocess.run([sys.executable, "-m", "netbound.harness.cli", "experiment", "--config",
                               str(CONFIGS / "validity.cfg"), "--out", str(out)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        paths.append(out)
    a, b = (_rows_without_seconds(p) for p in paths)
    ok = a == b and len(a) > 1
    report(10, ok, f"two CLI runs produced {len(a) - 1} identical rows (seconds column excluded)",
           time.perf_counter() - start)
    assert ok
