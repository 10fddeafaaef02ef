"""Fixed-schema CSV files shared by runs, aggregation and phase reports.

Floats are written with 17 significant digits so they parse back to the
identical 64-bit value and files can be compared byte for byte.
"""
from __future__ import annotations

import csv
import io
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

METRICS_COLUMNS = ("episode", "entropy", "return", "success", "steps",
                   "value_loss", "policy_loss", "total_loss")
AGGREGATE_COLUMNS = ("arch", "episode", "mean", "ci_low", "ci_high", "n_runs")
SEGMENT_COLUMNS = ("arch", "segment", "kind", "start_episode", "end_episode",
                   "start_value", "end_value")


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value) + 0.0, ".17g")
    return str(value)


def render(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def atomic_write(path: str | Path, text: str) -> None:
    """Write to a sibling temp file and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    atomic_write(path, render(columns, rows))


def read_csv(path: str | Path, columns: Sequence[str] | None = None) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if columns is not None and tuple(reader.fieldnames or ()) != tuple(columns):
            raise ValueError(f"{path}: expected columns {','.join(columns)}, "
                             f"found {','.join(reader.fieldnames or ())}")
        return list(reader)


def read_metrics(path: str | Path) -> dict[str, np.ndarray]:
    rows = read_csv(path, METRICS_COLUMNS)
    return {c: np.array([float(r[c]) for r in rows]) for c in METRICS_COLUMNS}
