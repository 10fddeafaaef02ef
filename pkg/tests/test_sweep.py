import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

from ddlab import gridworld as gw
from ddlab.agent import AgentConfig, Learner
from ddlab.csvio import METRICS_COLUMNS, fmt, read_metrics
from ddlab.errors import NumericError, UsageError
from ddlab.neural import DEFAULT_ARCHITECTURES
from ddlab import sweep
from ddlab.sweep import (RunManifest, SweepConfig, aggregate_runs, config_from_dict,
                         config_to_dict, derive_seed, is_complete, load_config, run_one, run_sweep)


def small_config(tmp_path, **kw):
    base = dict(architectures=((4,), (6, 3)), seeds_per_arch=3, master_seed=7,
                env=gw.EnvConfig(slippery=True, max_steps=20),
                agent=AgentConfig(episodes=12), window=3, out=tmp_path / "runs")
    base.update(kw)
    return SweepConfig(**base)


def test_derive_seed_deterministic_and_distinct():
    assert derive_seed(123, 2, 5) == derive_seed(123, 2, 5)
    rng = np.random.default_rng(0)
    masters = [int(m) for m in rng.integers(0, 2**64, size=10_000, dtype=np.uint64)]
    for m in masters + [0, 2**64 - 1]:
        assert derive_seed(m, 0, 0) != derive_seed(m, 0, 1)
        seeds = {derive_seed(m, a, k) for a in range(5) for k in range(15)}
        assert len(seeds) == 75
        assert all(0 <= s < 2**64 for s in seeds)
    with pytest.raises(UsageError):
        derive_seed(1, -1, 0)


def test_splitmix_reference_value():
    # first output of the reference splitmix64 generator seeded with 0
    assert sweep.splitmix64(0) == 0xE220A8397B1DCDAF


def test_bundled_default_config_is_full_grid():
    cfg = load_config(sweep.default_config_path())
    assert cfg.architectures == DEFAULT_ARCHITECTURES
    assert cfg.seeds_per_arch == 15
    assert len(cfg.jobs()) == 75
    assert cfg.agent == AgentConfig()
    assert cfg.env.map.cells == gw.DEFAULT_MAP


def test_config_round_trip(tmp_path):
    cfg = small_config(tmp_path)
    text = yaml.safe_dump(config_to_dict(cfg))
    assert config_from_dict(yaml.safe_load(text)) == cfg


@pytest.mark.parametrize("bad", [{"seeds_per_arch": 1}, {"architectures": []},
                                 {"architectures": [[0]]}, {"bogus": 1},
                                 {"agent": {"gamma": 2.0}}, {"env": {"max_steps": 0}},
                                 {"entropy_mode": "mean"}])
def test_config_validation(bad):
    with pytest.raises(UsageError):
        config_from_dict(bad)


def test_canonical_order_is_by_parameter_count():
    cfg = SweepConfig()
    assert cfg.canonical_order() == [(64,), (64, 64), (64, 64, 64), (128, 128), (128, 128, 128)]


def test_manifest_round_trip(tmp_path):
    spec = small_config(tmp_path).jobs()[4]
    m = RunManifest.for_spec(spec)
    m.status, m.episodes_completed, m.error = "aborted", 3, "boom"
    assert RunManifest.loads(m.dumps()) == m
    json.loads(m.dumps())


def test_run_one_writes_rows_and_is_reproducible(tmp_path):
    spec = small_config(tmp_path, agent=AgentConfig(episodes=10)).jobs()[0]
    manifest = run_one(spec)
    assert manifest.status == "complete" and manifest.episodes_completed == 10
    metrics = (spec.directory / "metrics.csv").read_bytes()
    lines = metrics.decode().splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    assert len(lines) == 11
    m = read_metrics(spec.directory / "metrics.csv")
    assert list(m["episode"]) == list(range(1, 11))
    again = replace(spec, directory=tmp_path / "again")
    run_one(again)
    assert (again.directory / "metrics.csv").read_bytes() == metrics
    assert not list(spec.directory.glob(".*tmp*"))


def test_csv_floats_round_trip_exactly():
    rng = np.random.default_rng(3)
    for x in np.concatenate([rng.normal(size=1000) * 10.0 ** rng.integers(-300, 300, 1000),
                             [0.0, -0.0, 1e-320, np.pi]]):
        assert float(fmt(x)) == x


def test_aborted_run_keeps_partial_series(tmp_path, monkeypatch):
    real = Learner.episodes

    def explode(self, n=None):
        for i, st in enumerate(real(self, n)):
            if i == 4:
                raise NumericError("non-finite loss")
            yield st

    monkeypatch.setattr(Learner, "episodes", explode)
    spec = small_config(tmp_path).jobs()[0]
    manifest = run_one(spec)
    assert manifest.status == "aborted" and manifest.episodes_completed == 4
    assert "non-finite" in manifest.error
    assert len(read_metrics(spec.directory / "metrics.csv")["episode"]) == 4
    assert RunManifest.read(spec.directory).status == "aborted"


def test_manifest_not_complete_if_metrics_write_dies(tmp_path, monkeypatch):
    spec = small_config(tmp_path).jobs()[0]

    def die(*a, **k):
        raise KeyboardInterrupt

    monkeypatch.setattr(sweep, "write_csv", die)
    with pytest.raises(KeyboardInterrupt):
        run_one(spec)
    assert RunManifest.read(spec.directory).status == "running"
    assert not is_complete(spec.directory)


def _tree(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_sweep_schedule_independence(tmp_path):
    a = run_sweep(small_config(tmp_path, out=tmp_path / "a"), parallelism=1)
    b = run_sweep(small_config(tmp_path, out=tmp_path / "b"), parallelism=3)
    assert a.ok and b.ok
    ta, tb = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    ta.pop("sweep.yaml"), tb.pop("sweep.yaml")
    assert ta == tb
    assert len([k for k in ta if k.endswith("metrics.csv")]) == 6
    assert sorted(k for k in ta if k.startswith("aggregate/")) == ["aggregate/4.csv", "aggregate/6-3.csv"]


def test_seed_isolation_under_architecture_permutation(tmp_path):
    cfg = small_config(tmp_path, out=tmp_path / "a")
    flipped = replace(cfg, architectures=tuple(reversed(cfg.architectures)), out=tmp_path / "b")
    run_sweep(cfg)
    run_sweep(flipped)
    for p in (tmp_path / "a").glob("*/seed-*/metrics.csv"):
        q = tmp_path / "b" / p.relative_to(tmp_path / "a")
        assert p.read_bytes() == q.read_bytes()


def test_resume_skips_completed_runs(tmp_path):
    cfg = small_config(tmp_path)
    first = run_sweep(cfg)
    before = {p: p.stat().st_mtime_ns for p in cfg.out.glob("*/seed-*/metrics.csv")}
    # break one run so resume has something to redo
    broken = cfg.out / "4" / "seed-1" / "manifest.json"
    m = RunManifest.loads(broken.read_text())
    m.status = "running"
    broken.write_text(m.dumps())
    second = run_sweep(cfg, resume=True)
    assert first.ok and second.ok
    assert list(second.statuses.values()).count("skipped") == 5
    assert second.statuses[("4", 1)] == "complete"
    for p, t in before.items():
        if "4/seed-1" not in p.as_posix():
            assert p.stat().st_mtime_ns == t
    third = run_sweep(cfg, resume=True)
    assert set(third.statuses.values()) == {"skipped"}


def test_aggregate_runs_skips_underpopulated_arch(tmp_path, caplog):
    cfg = small_config(tmp_path)
    run_sweep(cfg)
    for k in (1, 2):
        m = RunManifest.read(cfg.out / "6-3" / f"seed-{k}")
        m.status = "aborted"
        (cfg.out / "6-3" / f"seed-{k}" / "manifest.json").write_text(m.dumps())
    aggs = aggregate_runs(cfg.out, 3)
    assert list(aggs) == ["4"] and aggs["4"].n_runs == 3
    assert "skipping 6-3" in caplog.text


def test_all_states_entropy_mode(tmp_path):
    cfg = small_config(tmp_path, entropy_mode="all-states")
    spec = cfg.jobs()[0]
    run_one(spec)
    h = read_metrics(spec.directory / "metrics.csv")["entropy"]
    assert RunManifest.read(spec.directory).entropy_mode == "all-states"
    assert h[0] == pytest.approx(np.log(4), abs=1e-12)
