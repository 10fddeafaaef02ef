"""Architecture x seed sweeps with derived seeds, resumable run directories and aggregation.

Layout under the output directory::

    <out>/<arch-label>/seed-<k>/manifest.json
    <out>/<arch-label>/seed-<k>/metrics.csv
    <out>/aggregate/<arch-label>.csv
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from . import gridworld as gw
from .agent import AgentConfig, Learner
from .analysis import AggregateSeries, aggregate
from .csvio import AGGREGATE_COLUMNS, METRICS_COLUMNS, atomic_write, read_metrics, write_csv
from .errors import NumericError, UsageError
from .neural import DEFAULT_ARCHITECTURES, Architecture

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
ENTROPY_MODES = ("visited", "all-states")


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, arch_index: int, seed_index: int) -> int:
    """Mix ``master`` with the grid coordinate; injective for indices below 2**32."""
    if arch_index < 0 or seed_index < 0:
        raise UsageError("seed indices must be non-negative")
    key = ((arch_index & 0xFFFFFFFF) << 32) | (seed_index & 0xFFFFFFFF)
    return splitmix64((master ^ key) & MASK64)


def arch_label(widths) -> str:
    return "-".join(str(int(w)) for w in widths)


def parse_label(label: str) -> tuple[int, ...]:
    return tuple(int(w) for w in label.split("-"))


@dataclass(frozen=True)
class SweepConfig:
    architectures: tuple[tuple[int, ...], ...] = DEFAULT_ARCHITECTURES
    seeds_per_arch: int = 15
    master_seed: int = 20251018
    env: gw.EnvConfig = field(default_factory=gw.EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    window: int = 50
    prominence: float = 0.1
    entropy_mode: str = "visited"
    out: Path = Path("runs")

    def __post_init__(self):
        if not self.architectures:
            raise UsageError("sweep needs at least one architecture")
        if self.seeds_per_arch < 2:
            raise UsageError("seeds_per_arch must be >= 2 for confidence intervals")
        if self.entropy_mode not in ENTROPY_MODES:
            raise UsageError(f"entropy_mode must be one of {ENTROPY_MODES}")
        if self.window < 1:
            raise UsageError("window must be >= 1")
        for widths in self.architectures:
            Architecture(widths)

    def architecture(self, widths) -> Architecture:
        return Architecture(tuple(widths), self.env.map.n_states, gw.N_ACTIONS)

    def canonical_order(self) -> list[tuple[int, ...]]:
        """Architectures sorted by parameter count, then widths; defines arch_index."""
        unique = {tuple(w) for w in self.architectures}
        return sorted(unique, key=lambda w: (self.architecture(w).n_params(), w))

    def jobs(self) -> list["RunSpec"]:
        specs = []
        for arch_index, widths in enumerate(self.canonical_order()):
            for k in range(self.seeds_per_arch):
                specs.append(RunSpec(
                    widths=widths, arch_index=arch_index, seed_index=k,
                    seed=derive_seed(self.master_seed, arch_index, k),
                    master_seed=self.master_seed, env=self.env, agent=self.agent,
                    entropy_mode=self.entropy_mode,
                    directory=Path(self.out) / arch_label(widths) / f"seed-{k}"))
        return specs


def env_to_dict(env: gw.EnvConfig) -> dict[str, Any]:
    return {"slippery": env.slippery, "max_steps": env.max_steps, "map": list(env.map.cells)}


def env_from_dict(d: dict[str, Any]) -> gw.EnvConfig:
    d = dict(d or {})
    grid = gw.GridMap.from_rows(d.pop("map", gw.DEFAULT_MAP))
    unknown = set(d) - {"slippery", "max_steps"}
    if unknown:
        raise UsageError(f"unknown env keys: {sorted(unknown)}")
    return gw.EnvConfig(slippery=bool(d.get("slippery", True)),
                        max_steps=int(d.get("max_steps", 100)), map=grid)


def agent_from_dict(d: dict[str, Any]) -> AgentConfig:
    d = dict(d or {})
    known = set(AgentConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise UsageError(f"unknown agent keys: {sorted(unknown)}")
    return AgentConfig(**{k: (int(v) if k == "episodes" else float(v)) for k, v in d.items()})


def config_from_dict(d: dict[str, Any]) -> SweepConfig:
    d = dict(d or {})
    kwargs: dict[str, Any] = {}
    if "architectures" in d:
        kwargs["architectures"] = tuple(tuple(int(w) for w in a) for a in d.pop("architectures"))
    for key, cast in (("seeds_per_arch", int), ("master_seed", int), ("window", int),
                      ("prominence", float), ("entropy_mode", str), ("out", Path)):
        if key in d:
            kwargs[key] = cast(d.pop(key))
    kwargs["env"] = env_from_dict(d.pop("env", {}))
    kwargs["agent"] = agent_from_dict(d.pop("agent", {}))
    if d:
        raise UsageError(f"unknown config keys: {sorted(d)}")
    return SweepConfig(**kwargs)


def config_to_dict(cfg: SweepConfig) -> dict[str, Any]:
    return {
        "architectures": [list(a) for a in cfg.architectures],
        "seeds_per_arch": cfg.seeds_per_arch,
        "master_seed": cfg.master_seed,
        "window": cfg.window,
        "prominence": cfg.prominence,
        "entropy_mode": cfg.entropy_mode,
        "out": str(cfg.out),
        "env": env_to_dict(cfg.env),
        "agent": asdict(cfg.agent),
    }


def load_config(path: str | Path) -> SweepConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))


def default_config_path() -> Path:
    return Path(__file__).parent / "configs" / "default.yaml"


@dataclass(frozen=True)
class RunSpec:
    widths: tuple[int, ...]
    arch_index: int
    seed_index: int
    seed: int
    master_seed: int
    env: gw.EnvConfig
    agent: AgentConfig
    entropy_mode: str
    directory: Path

    @property
    def label(self) -> str:
        return arch_label(self.widths)


@dataclass
class RunManifest:
    arch: list[int]
    arch_index: int
    seed_index: int
    seed: int
    master_seed: int
    env: dict[str, Any]
    agent: dict[str, Any]
    entropy_mode: str
    version: str = __version__
    status: str = "running"
    episodes_completed: int = 0
    error: str = ""

    @classmethod
    def for_spec(cls, spec: RunSpec) -> "RunManifest":
        return cls(list(spec.widths), spec.arch_index, spec.seed_index, spec.seed,
                   spec.master_seed, env_to_dict(spec.env), asdict(spec.agent), spec.entropy_mode)

    def dumps(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    @classmethod
    def read(cls, directory: Path) -> "RunManifest | None":
        path = Path(directory) / "manifest.json"
        if not path.exists():
            return None
        return cls.loads(path.read_text())


def is_complete(directory: Path) -> bool:
    m = RunManifest.read(directory)
    return m is not None and m.status == "complete" and (Path(directory) / "metrics.csv").exists()


def run_one(spec: RunSpec) -> RunManifest:
    """Train one (architecture, seed) job and persist its manifest and metrics."""
    directory = Path(spec.directory)
    manifest = RunManifest.for_spec(spec)
    atomic_write(directory / "manifest.json", manifest.dumps())

    arch = Architecture(spec.widths, spec.env.map.n_states, gw.N_ACTIONS)
    learner = Learner(arch, spec.env, spec.agent, spec.seed)
    rows = []
    try:
        for st in learner.episodes():
            h = st.entropy if spec.entropy_mode == "visited" else st.all_states_entropy
            rows.append((st.episode, h, st.ret, st.success, st.steps,
                         st.loss.value_loss, st.loss.policy_loss, st.loss.total))
    except NumericError as exc:
        manifest.status = "aborted"
        manifest.error = str(exc)
        log.warning("%s seed-%d aborted after %d episodes: %s",
                    spec.label, spec.seed_index, len(rows), exc)
    else:
        manifest.status = "complete"
    manifest.episodes_completed = len(rows)
    write_csv(directory / "metrics.csv", METRICS_COLUMNS, rows)
    atomic_write(directory / "manifest.json", manifest.dumps())
    return manifest


def _safe_run(spec: RunSpec) -> tuple[RunSpec, str]:
    try:
        return spec, run_one(spec).status
    except Exception as exc:  # recorded per run; the sweep carries on
        log.exception("run %s seed-%d failed", spec.label, spec.seed_index)
        manifest = RunManifest.for_spec(spec)
        manifest.status, manifest.error = "failed", repr(exc)
        atomic_write(Path(spec.directory) / "manifest.json", manifest.dumps())
        return spec, "failed"


@dataclass
class SweepResult:
    statuses: dict[tuple[str, int], str]
    aggregates: dict[str, AggregateSeries]

    @property
    def ok(self) -> bool:
        return all(s in ("complete", "skipped") for s in self.statuses.values())


def run_sweep(config: SweepConfig, parallelism: int = 1, resume: bool = False) -> SweepResult:
    if parallelism < 1:
        raise UsageError("parallelism must be >= 1")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "sweep.yaml", yaml.safe_dump(config_to_dict(config), sort_keys=True))

    statuses: dict[tuple[str, int], str] = {}
    todo = []
    for spec in config.jobs():
        if resume and is_complete(spec.directory):
            statuses[(spec.label, spec.seed_index)] = "skipped"
        else:
            todo.append(spec)
    if parallelism == 1 or len(todo) <= 1:
        results = map(_safe_run, todo)
        for spec, status in results:
            statuses[(spec.label, spec.seed_index)] = status
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for spec, status in pool.map(_safe_run, todo):
                statuses[(spec.label, spec.seed_index)] = status

    aggregates = aggregate_runs(out, config.window)
    for label, agg in aggregates.items():
        write_aggregate(out / "aggregate" / f"{label}.csv", [agg])
    return SweepResult(dict(sorted(statuses.items())), aggregates)


def completed_runs(runs_dir: str | Path) -> dict[str, list[Path]]:
    """Completed run directories grouped by arch label (smallest network first), ordered by seed."""
    found: dict[str, list[tuple[int, Path]]] = {}
    for manifest_path in sorted(Path(runs_dir).glob("*/seed-*/manifest.json")):
        directory = manifest_path.parent
        m = RunManifest.read(directory)
        if m is None or m.status != "complete" or not (directory / "metrics.csv").exists():
            continue
        found.setdefault(arch_label(m.arch), []).append((m.seed_index, directory))
    order = sorted(found, key=lambda label: (Architecture(parse_label(label)).n_params(), label))
    return {label: [d for _, d in sorted(found[label])] for label in order}


def aggregate_runs(runs_dir: str | Path, window: int, column: str = "entropy") -> dict[str, AggregateSeries]:
    out: dict[str, AggregateSeries] = {}
    for label, dirs in completed_runs(runs_dir).items():
        if len(dirs) < 2:
            log.warning("skipping %s: %d completed run(s), need at least 2", label, len(dirs))
            continue
        series = [read_metrics(d / "metrics.csv")[column] for d in dirs]
        lengths = {len(s) for s in series}
        if len(lengths) != 1:
            log.warning("skipping %s: runs differ in length %s", label, sorted(lengths))
            continue
        out[label] = aggregate(series, window, arch=label)
    return out


def write_aggregate(path: str | Path, series: list[AggregateSeries]) -> None:
    rows = []
    for agg in series:
        for ep, m, lo, hi in zip(agg.episodes, agg.mean, agg.ci_low, agg.ci_high):
            rows.append((agg.arch, int(ep), m, lo, hi, agg.n_runs))
    write_csv(path, AGGREGATE_COLUMNS, rows)


def read_aggregate(path: str | Path) -> list[AggregateSeries]:
    from .csvio import read_csv

    rows = read_csv(path, AGGREGATE_COLUMNS)
    if not rows:
        raise UsageError(f"{path}: no rows")
    grouped: dict[str, list[dict[str, str]]] = {}
    for r in rows:
        grouped.setdefault(r["arch"], []).append(r)
    series = []
    for label, rs in grouped.items():
        rs.sort(key=lambda r: int(r["episode"]))
        col = lambda c: np.array([float(r[c]) for r in rs])  # noqa: E731
        series.append(AggregateSeries(label, col("mean"), col("ci_low"), col("ci_high"),
                                      int(rs[0]["n_runs"])))
    return series

