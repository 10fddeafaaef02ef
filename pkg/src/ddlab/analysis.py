"""Entropy metrics, smoothing, cross-seed confidence bands and phase segmentation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import UsageError


def policy_entropy(probs) -> float:
    """Shannon entropy in nats, with 0 * log 0 taken as 0."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise UsageError(f"not a probability vector: {probs!r}")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def episode_entropy(record) -> float:
    """Mean policy entropy over the states visited in ``record``."""
    if len(record) == 0:
        raise UsageError("episode entropy of an empty record")
    return float(np.mean(entropy_rows(record.probs)))


def smooth(series, window: int) -> np.ndarray:
    """Centered rolling mean; the window shrinks near both ends."""
    if window < 1:
        raise UsageError("window must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    if window == 1 or x.size == 0:
        return x.copy()
    half_lo = (window - 1) // 2
    half_hi = window - 1 - half_lo
    idx = np.arange(x.size)
    lo = np.maximum(idx - half_lo, 0)
    hi = np.minimum(idx + half_hi, x.size - 1)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


@lru_cache(maxsize=None)
def t_quantile(q: float, df: int) -> float:
    return float(stats.t.ppf(q, df))


def confidence_interval(values, level: float = 0.95) -> tuple[float, float, float]:
    """Student-t interval for the mean: ``(mean, low, high)``."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 2:
        raise UsageError("confidence interval needs at least two values")
    mean = float(x.mean())
    half = t_quantile(0.5 + level / 2, n - 1) * float(x.std(ddof=1)) / np.sqrt(n)
    return mean, mean - half, mean + half


@dataclass
class AggregateSeries:
    arch: str
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_runs: int

    @property
    def episodes(self) -> np.ndarray:
        return np.arange(1, self.mean.size + 1)


def aggregate(runs: Sequence[Sequence[float]], window: int = 50, arch: str = "",
              level: float = 0.95) -> AggregateSeries:
    """Per-episode t-interval across runs, after smoothing each run."""
    if len(runs) < 2:
        raise UsageError("aggregation needs at least two runs")
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise UsageError(f"runs differ in length: {sorted(lengths)}")
    m = np.stack([smooth(r, window) for r in runs])
    n = m.shape[0]
    mean = m.mean(axis=0)
    half = t_quantile(0.5 + level / 2, n - 1) * m.std(axis=0, ddof=1) / np.sqrt(n)
    return AggregateSeries(arch, mean, mean - half, mean + half, n)


@dataclass(frozen=True)
class Segment:
    kind: str  # "descent" or "ascent"
    start: int
    end: int
    start_value: float
    end_value: float


@dataclass
class PhaseReport:
    segments: list[Segment]

    @property
    def re_ascents(self) -> int:
        return sum(s.kind == "ascent" for s in self.segments)

    @property
    def descents(self) -> int:
        return sum(s.kind == "descent" for s in self.segments)

    def summary(self) -> str:
        d, a = self.descents, self.re_ascents
        return f"{d} descent{'s' if d != 1 else ''}, {a} re-ascent{'s' if a != 1 else ''}"


def turning_points(x: np.ndarray, prominence: float) -> list[int]:
    """Zigzag pivots: reversals larger than ``prominence`` from the running extreme.

    The first pivot is index 0 and the last is the final index. The trend is
    set by the first point that departs from ``x[0]`` by more than
    ``prominence``; ties keep the earliest extreme.
    """
    n = x.size
    pivots = [0]
    direction = 0
    cand = 0
    for i in range(1, n):
        if direction == 0:
            if abs(x[i] - x[0]) > prominence:
                direction = -1 if x[i] < x[0] else 1
                cand = i
        elif direction < 0:
            if x[i] < x[cand]:
                cand = i
            elif x[i] - x[cand] > prominence:
                pivots.append(cand)
                direction, cand = 1, i
        else:
            if x[i] > x[cand]:
                cand = i
            elif x[cand] - x[i] > prominence:
                pivots.append(cand)
                direction, cand = -1, i
    if pivots[-1] != n - 1:
        pivots.append(n - 1)
    return pivots


def segment_phases(series, prominence: float = 0.1) -> PhaseReport:
    x = np.asarray(series, dtype=np.float64)
    if x.size < 2:
        raise UsageError("phase segmentation needs at least two points")
    if prominence < 0:
        raise UsageError("prominence must be non-negative")
    pivots = turning_points(x, prominence)
    segments = []
    for a, b in zip(pivots, pivots[1:]):
        kind = "ascent" if x[b] > x[a] else "descent"
        segments.append(Segment(kind, a, b, float(x[a]), float(x[b])))
    return PhaseReport(segments)
