"""Command-line entry point: ``ddlab {run,sweep,aggregate,phases,plot,gradcheck}``.

Exit codes: 0 success, 1 run or check failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import gridworld as gw
from .agent import AgentConfig
from .analysis import segment_phases
from .csvio import SEGMENT_COLUMNS, read_metrics, write_csv
from .errors import UsageError
from .neural import DEFAULT_ARCHITECTURES, Architecture, gradcheck
from .plotting import PlotSpec, legend_label, render
from .sweep import (RunSpec, aggregate_runs, arch_label, default_config_path, load_config,
                    read_aggregate, run_one, run_sweep, write_aggregate)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
GRADCHECK_TOL = 1e-4

log = logging.getLogger("ddlab")


def widths(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not out or any(w < 1 for w in out):
        raise argparse.ArgumentTypeError("hidden widths must be positive")
    return out


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


def non_negative(text: str) -> float:
    v = float(text)
    if not v >= 0.0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def positive_float(text: str) -> float:
    v = float(text)
    if not v > 0.0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def cmd_run(args) -> int:
    env = gw.EnvConfig(slippery=args.slippery, max_steps=args.max_steps)
    agent = AgentConfig(gamma=args.gamma, value_coef=args.value_coef,
                        entropy_coef=args.entropy_coef, learning_rate=args.lr,
                        episodes=args.episodes)
    spec = RunSpec(widths=args.arch, arch_index=0, seed_index=0, seed=args.seed,
                   master_seed=args.seed, env=env, agent=agent,
                   entropy_mode=args.entropy_mode, directory=Path(args.out))
    manifest = run_one(spec)
    m = read_metrics(Path(args.out) / "metrics.csv")
    tail = slice(-100, None)
    h = float(np.mean(m["entropy"][tail])) if m["entropy"].size else float("nan")
    sr = float(np.mean(m["success"][tail])) if m["success"].size else float("nan")
    print(f"arch {legend_label(arch_label(args.arch))} seed {args.seed}: {manifest.status}, "
          f"{manifest.episodes_completed} episodes, last-100 mean entropy {h:.4f} nats, "
          f"success rate {sr:.3f}")
    return EXIT_OK if manifest.status == "complete" else EXIT_FAIL


def write_phases(series, prominence: float, out: Path) -> list[str]:
    rows, lines = [], []
    for s in series:
        report = segment_phases(s.mean, prominence)
        lines.append(f"{legend_label(s.arch)}: {report.summary()}")
        for i, seg in enumerate(report.segments):
            a, b = int(s.episodes[seg.start]), int(s.episodes[seg.end])
            lines.append(f"  {i:>3}  {seg.kind:<8} {a:>6} -> {b:>6}  "
                         f"{seg.start_value:8.4f} -> {seg.end_value:8.4f}")
            rows.append((s.arch, i, seg.kind, a, b, seg.start_value, seg.end_value))
    write_csv(out, SEGMENT_COLUMNS, rows)
    return lines


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.out is not None:
        overrides["out"] = Path(args.out)
    if args.seeds is not None:
        overrides["seeds_per_arch"] = args.seeds
    if args.episodes is not None:
        overrides["agent"] = replace(cfg.agent, episodes=args.episodes)
    if overrides:
        cfg = replace(cfg, **overrides)
    result = run_sweep(cfg, parallelism=args.jobs, resume=args.resume)
    counts: dict[str, int] = {}
    for status in result.statuses.values():
        counts[status] = counts.get(status, 0) + 1
    print(f"{len(result.statuses)} runs: " + ", ".join(f"{v} {k}" for k, v in sorted(counts.items())))
    if not result.ok:
        for (label, k), status in result.statuses.items():
            if status not in ("complete", "skipped"):
                print(f"  {legend_label(label)} seed-{k}: {status}")
    series = list(result.aggregates.values())
    if series:
        agg_dir = Path(cfg.out) / "aggregate"
        for line in write_phases(series, cfg.prominence, agg_dir / "phases.csv"):
            print(line)
        fig = render(PlotSpec(series, Path(cfg.out) / "entropy.svg", window=cfg.window))
        print(f"figure: {fig}")
    return EXIT_OK if result.ok else EXIT_FAIL


def cmd_aggregate(args) -> int:
    aggs = aggregate_runs(args.runs, args.window)
    if not aggs:
        print(f"no architecture in {args.runs} has two or more completed runs", file=sys.stderr)
        return EXIT_FAIL
    write_aggregate(args.out, list(aggs.values()))
    for label, agg in aggs.items():
        print(f"{legend_label(label)}: {agg.n_runs} runs, {agg.mean.size} episodes")
    return EXIT_OK


def _load_aggregates(paths) -> list:
    series = []
    for p in paths:
        series.extend(read_aggregate(p))
    return series


def cmd_phases(args) -> int:
    try:
        series = _load_aggregates(args.agg)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read aggregate: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = Path(args.out) if args.out else Path(args.agg[0]).with_suffix(".phases.csv")
    for line in write_phases(series, args.prominence, out):
        print(line)
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        series = _load_aggregates(args.agg)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read aggregate: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if not series:
        print("no series to plot", file=sys.stderr)
        return EXIT_FAIL
    out = render(PlotSpec(series, Path(args.out), window=args.window, title=args.title))
    print(f"figure: {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = None
    for w in DEFAULT_ARCHITECTURES:
        report = gradcheck(Architecture(w), args.trials, rng)
        print(report.line())
        if worst is None or report.max_rel_error > worst.max_rel_error:
            worst = report
    ok = worst.max_rel_error < GRADCHECK_TOL
    print(f"{'PASS' if ok else 'FAIL'}: max relative error {worst.max_rel_error:.3e} "
          f"(tolerance {GRADCHECK_TOL:g}) worst at {legend_label(worst.arch.label)} {worst.worst}")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one architecture with one seed")
    p.add_argument("--arch", type=widths, default=(64, 64), help="hidden widths, e.g. 64,64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=positive_int, default=AgentConfig.episodes)
    p.add_argument("--slippery", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--max-steps", type=positive_int, default=100)
    p.add_argument("--entropy-coef", type=non_negative, default=AgentConfig.entropy_coef)
    p.add_argument("--value-coef", type=non_negative, default=AgentConfig.value_coef)
    p.add_argument("--lr", type=positive_float, default=AgentConfig.learning_rate)
    p.add_argument("--gamma", type=unit_interval, default=AgentConfig.gamma)
    p.add_argument("--entropy-mode", choices=("visited", "all-states"), default="visited")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the architecture x seed grid, aggregate, report")
    p.add_argument("--config", default=str(default_config_path()))
    p.add_argument("--jobs", type=positive_int, default=1)
    p.add_argument("--resume", action="store_true", help="skip runs whose manifest is complete")
    p.add_argument("--out", help="override the config's output directory")
    p.add_argument("--episodes", type=positive_int, help="override episodes per run")
    p.add_argument("--seeds", type=int, help="override seeds per architecture")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("aggregate", help="cross-seed confidence bands from run directories")
    p.add_argument("--runs", required=True)
    p.add_argument("--window", type=positive_int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("phases", help="descent / re-ascent segmentation of aggregate curves")
    p.add_argument("--agg", required=True, nargs="+")
    p.add_argument("--prominence", type=non_negative, default=0.1)
    p.add_argument("--out", help="segments CSV (default: next to the first aggregate)")
    p.set_defaults(func=cmd_phases)

    p = sub.add_parser("plot", help="entropy curves with CI bands")
    p.add_argument("--agg", required=True, nargs="+")
    p.add_argument("--out", required=True, help="figure path; .svg, .png or .pdf")
    p.add_argument("--window", type=positive_int, help="smoothing window to note in the title")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("gradcheck", help="finite-difference check of backprop on the default grid")
    p.add_argument("--trials", type=positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ddlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
