"""Entropy-vs-episode figures: one mean line and one translucent CI band per architecture."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib
from matplotlib.figure import Figure

from .analysis import AggregateSeries
from .errors import UsageError

# fixed so that identical inputs give identical SVG bytes
_RC = {
    "svg.hashsalt": "ddlab",
    "svg.fonttype": "none",
    "path.simplify": False,
    "font.size": 10,
}
_METADATA = {"Date": None, "Creator": None, "Format": None, "Type": None}
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def legend_label(arch: str) -> str:
    return "[" + ", ".join(arch.split("-")) + "]"


@dataclass
class PlotSpec:
    series: Sequence[AggregateSeries]
    output: Path
    xlabel: str = "Training Episodes"
    ylabel: str = "Policy Entropy (nats)"
    window: int | None = None
    title: str | None = None

    def colors(self) -> dict[str, str]:
        labels = [s.arch for s in self.series]
        if len(set(labels)) != len(labels):
            raise UsageError("duplicate architecture in plot inputs")
        if len(labels) > len(PALETTE):
            raise UsageError(f"at most {len(PALETTE)} architectures per plot")
        return {label: PALETTE[i] for i, label in enumerate(labels)}


def render(spec: PlotSpec) -> Path:
    """Draw ``spec`` and save it; the format follows the output suffix (svg, png, pdf)."""
    if not spec.series:
        raise UsageError("nothing to plot")
    colors = spec.colors()
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(8, 4.5))
        ax = fig.add_subplot()
        for s in spec.series:
            c = colors[s.arch]
            ax.fill_between(s.episodes, s.ci_low, s.ci_high, color=c, alpha=0.2,
                            linewidth=0, gid=f"ci-{s.arch}")
            ax.plot(s.episodes, s.mean, color=c, linewidth=1.2,
                    label=legend_label(s.arch), gid=f"mean-{s.arch}")
        ax.set_xlabel(spec.xlabel)
        ax.set_ylabel(spec.ylabel)
        ax.set_ylim(bottom=0)
        ax.margins(x=0)
        title = spec.title
        if title is None and spec.window:
            title = f"mean and 95% CI over seeds, smoothing window {spec.window}"
        if title:
            ax.set_title(title, fontsize=9)
        leg = ax.legend(loc="upper right", frameon=False)
        leg.set_gid("legend")
        fig.tight_layout()
        out = Path(spec.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        kwargs = {"metadata": _METADATA} if out.suffix.lower() == ".svg" else {}
        fig.savefig(out, **kwargs)
    return out
