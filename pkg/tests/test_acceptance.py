"""Exit criteria for the build, one test per criterion.

Each test appends a PASS/FAIL line that is printed in the terminal summary.
The full-scale sweep (criterion 9) takes several minutes on a single core.
"""
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ddlab import gridworld as gw
from ddlab.analysis import confidence_interval, turning_points
from ddlab.cli import main
from ddlab.csvio import read_metrics
from ddlab.neural import DEFAULT_ARCHITECTURES, Architecture, gradcheck
from ddlab.sweep import (SweepConfig, completed_runs, default_config_path, load_config,
                         read_aggregate, run_sweep)

import oracles

LN4 = math.log(4)
DETERMINISTIC = Path(default_config_path()).with_name("deterministic.yaml")


def record(log, number, ok, detail):
    log.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
    return ok


@pytest.fixture(scope="module")
def det_runs(tmp_path_factory):
    """Deterministic-lake runs, 15 seeds each, under the default agent settings."""
    base = load_config(DETERMINISTIC)
    root = tmp_path_factory.mktemp("acceptance")
    t0 = time.perf_counter()
    run_sweep(replace(base, architectures=((64, 64),), out=root / "c6"))
    t6 = time.perf_counter() - t0
    t0 = time.perf_counter()
    short = replace(base.agent, episodes=2000)
    run_sweep(replace(base, architectures=((64,),), agent=short, out=root / "c7"))
    t7 = time.perf_counter() - t0
    t0 = time.perf_counter()
    run_sweep(replace(base, architectures=((128, 128, 128),), agent=short, out=root / "c8"))
    t8 = time.perf_counter() - t0 + t7
    return {"root": root, "t6": t6, "t7": t7, "t8": t8}


def entropy_by_seed(root, label):
    return [read_metrics(d / "metrics.csv")["entropy"] for d in completed_runs(root)[label]]


def test_c1_gradient_correctness(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    reports = [gradcheck(Architecture(w), 100, rng) for w in DEFAULT_ARCHITECTURES]
    elapsed = time.perf_counter() - t0
    worst = max(r.max_rel_error for r in reports)
    ok = worst < 1e-4 and elapsed < 30
    record(acceptance_log, 1, ok, f"max rel err {worst:.2e} < 1e-4 over 5 archs x 100 trials, "
                                  f"{elapsed:.1f}s < 30s")
    assert worst < 1e-4
    assert elapsed < 30


def test_c2_entropy_invariants(tmp_path, acceptance_log):
    cfg = load_config(default_config_path())
    cfg = replace(cfg, architectures=((64, 64),), seeds_per_arch=2, out=tmp_path)
    run_sweep(cfg)
    series = entropy_by_seed(tmp_path, "64-64")
    lo = min(s.min() for s in series)
    hi = max(s.max() for s in series)
    first_err = max(abs(s[0] - LN4) for s in series)
    full = all(len(s) == cfg.agent.episodes for s in series)
    ok = lo >= 0 and hi <= LN4 + 1e-12 and first_err <= 1e-12 and full
    record(acceptance_log, 2, ok, f"entropy in [{lo:.3g}, {hi:.13f}] within [0, ln4+1e-12], "
                                  f"first-episode |H - ln4| = {first_err:.1e}")
    assert full
    assert lo >= 0 and hi <= LN4 + 1e-12
    assert first_err <= 1e-12


def test_c3_statistics_oracle(acceptance_log):
    for df in range(1, 64):  # oracle quantile table, built outside the timed region
        oracles.t_quantile(0.975, df)
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 65))
        x = rng.normal(rng.uniform(-10, 10), rng.uniform(0.01, 5), size=n)
        worst = max(worst, float(np.max(np.abs(np.subtract(confidence_interval(x),
                                                            oracles.t_interval(x))))))
    mean, lo, hi = confidence_interval(range(1, 16))
    elapsed = time.perf_counter() - t0
    fixture_ok = abs(lo - 5.5234) <= 1e-3 and abs(hi - 10.4766) <= 1e-3 and mean == 8
    ok = worst <= 1e-9 and fixture_ok and elapsed < 5
    record(acceptance_log, 3, ok, f"max |CI - oracle| {worst:.1e} <= 1e-9 on 1000 samples; "
                                  f"1..15 -> [{lo:.4f}, {hi:.4f}]; {elapsed:.1f}s < 5s")
    assert worst <= 1e-9 and fixture_ok and elapsed < 5


def test_c4_phase_segmentation_oracle(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        x = np.cumsum(rng.normal(size=n)) if rng.random() < 0.5 else rng.normal(size=n)
        prom = float(rng.uniform(0, 2))
        mismatches += turning_points(x, prom) != oracles.zigzag_pivots(x, prom)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 5
    record(acceptance_log, 4, ok, f"{mismatches} mismatches vs brute-force scan on 1000 series, "
                                  f"{elapsed:.1f}s < 5s")
    assert mismatches == 0 and elapsed < 5


def test_c5_schedule_determinism(tmp_path, acceptance_log):
    cfg = load_config(default_config_path())
    cfg = replace(cfg, agent=replace(cfg.agent, episodes=50))
    t0 = time.perf_counter()
    a = run_sweep(replace(cfg, out=tmp_path / "serial"), parallelism=1)
    b = run_sweep(replace(cfg, out=tmp_path / "parallel"), parallelism=8)
    elapsed = time.perf_counter() - t0
    files = sorted(p.relative_to(tmp_path / "serial") for p in (tmp_path / "serial").glob("*/seed-*/metrics.csv"))
    same = all((tmp_path / "serial" / f).read_bytes() == (tmp_path / "parallel" / f).read_bytes()
               for f in files)
    ok = a.ok and b.ok and len(files) == 75 and same and elapsed < 120
    record(acceptance_log, 5, ok, f"{len(files)} metrics.csv byte-identical at jobs 1 vs 8: {same}, "
                                  f"{elapsed:.0f}s < 120s")
    assert len(files) == 75 and same and elapsed < 120


def test_c6_learning_sanity(det_runs, acceptance_log):
    rates = [float(read_metrics(d / "metrics.csv")["success"][-100:].mean())
             for d in completed_runs(det_runs["root"] / "c6")["64-64"]]
    passing = sum(r >= 0.9 for r in rates)
    q_rates = [oracles.q_learning_success(seed) for seed in range(15)]
    q_passing = sum(r >= 0.9 for r in q_rates)
    ok = len(rates) == 15 and passing >= 12 and q_passing >= 12 and det_runs["t6"] < 300
    record(acceptance_log, 6, ok, f"[64, 64] final-100 success >= 0.9 in {passing}/15 seeds "
                                  f"(tabular Q oracle {q_passing}/15), {det_runs['t6']:.0f}s < 300s")
    assert passing >= 12 and q_passing >= 12 and det_runs["t6"] < 300


def test_c7_small_models_reach_near_zero_entropy(det_runs, acceptance_log):
    late = [float(h[1899:2000].mean()) for h in entropy_by_seed(det_runs["root"] / "c7", "64")]
    passing = sum(v < 0.3 for v in late)
    ok = len(late) == 15 and passing >= 10 and det_runs["t7"] < 180
    record(acceptance_log, 7, ok, f"[64] mean entropy over episodes 1900-2000 < 0.3 in "
                                  f"{passing}/15 seeds (need 10), median {np.median(late):.3f}, "
                                  f"{det_runs['t7']:.0f}s < 180s")
    assert passing >= 10 and det_runs["t7"] < 180


def test_c8_large_models_keep_higher_entropy(det_runs, acceptance_log):
    small = [float(h[:2000].mean()) for h in entropy_by_seed(det_runs["root"] / "c7", "64")]
    large = [float(h[:2000].mean()) for h in entropy_by_seed(det_runs["root"] / "c8", "128-128-128")]
    wins = sum(b > a for a, b in zip(small, large))
    ok = len(small) == len(large) == 15 and wins >= 0.6 * 15 and det_runs["t8"] < 300
    record(acceptance_log, 8, ok, f"[128, 128, 128] mean entropy over episodes 1-2000 exceeds [64] "
                                  f"in {wins}/15 matched seeds (need 9); means "
                                  f"{np.mean(large):.3f} vs {np.mean(small):.3f}")
    assert wins >= 0.6 * 15 and det_runs["t8"] < 300


def test_c9_full_scale_sweep(tmp_path, acceptance_log, capsys):
    out = tmp_path / "full"
    t0 = time.perf_counter()
    code = main(["sweep", "--jobs", "8", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    runs = completed_runs(out)
    n_runs = sum(len(v) for v in runs.values())
    aggs = sorted((out / "aggregate").glob("*.csv"))
    curves = [s for p in aggs if p.name != "phases.csv" for s in read_aggregate(p)]
    svg = (out / "entropy.svg").read_text() if (out / "entropy.svg").exists() else ""
    five_curves = all(f'id="mean-{s.arch}"' in svg and f'id="ci-{s.arch}"' in svg for s in curves)
    ok = (code == 0 and n_runs == 75 and len(curves) == 5 and five_curves
          and (out / "aggregate" / "phases.csv").exists() and elapsed < 1800)
    record(acceptance_log, 9, ok, f"{n_runs} runs x 5000 episodes, {len(curves)} aggregate curves, "
                                  f"phases + SVG written in {elapsed / 60:.1f} min < 30 min "
                                  f"(this machine: single core)")
    assert code == 0 and n_runs == 75 and len(curves) == 5 and five_curves
    assert all(s.n_runs == 15 and s.mean.size == 5000 for s in curves)
    assert elapsed < 1800
