"""Matplotlib figures for scenario rows, traffic profiles and savings reports.

All figures use the Agg backend and are saved without a software tag so the
same rows always produce the same PNG bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

golden_mean = (5 ** 0.5 - 1.0) / 2.0
fig_width = 5.0
colors = ["#08589e", "#2b8cbe", "#4eb3d3", "#7bccc4", "#a8ddb5", "#ccebc5"]

params = {
    "axes.prop_cycle": matplotlib.cycler(color=colors),
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.family": "sans-serif",
    "font.sans-serif": ["DejaVu Sans"],
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "lines.linewidth": 1.5,
    "lines.markersize": 5,
}


def _new(**kw):
    with plt.rc_context(params):
        fig, ax = plt.subplots(**kw)
    return fig, ax


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    with plt.rc_context(params):
        fig.tight_layout()
        fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def _workload(r: dict) -> str:
    return f"{r['model']}\n{r['seq_len'] // 1024}K"


def grouped_bars(rows: list[dict], series_key: str, value_key: str = "relative",
                 ylabel: str = "relative throughput", title: str = ""):
    """One group of bars per workload, one bar per value of ``series_key``."""
    workloads = list(dict.fromkeys(_workload(r) for r in rows))
    series = list(dict.fromkeys(r[series_key] for r in rows))
    vals = {(_workload(r), r[series_key]): r[value_key] for r in rows}
    fig, ax = _new(figsize=[max(fig_width, 1.1 * len(workloads) + 1.5), fig_width * golden_mean])
    width = 0.8 / len(series)
    with plt.rc_context(params):
        for i, s in enumerate(series):
            xs = [j + (i - (len(series) - 1) / 2) * width for j in range(len(workloads))]
            ax.bar(xs, [vals.get((w, s), 0.0) for w in workloads], width, label=str(s),
                   color=colors[i % len(colors)])
        ax.set_xticks(range(len(workloads)))
        ax.set_xticklabels(workloads)
        ax.set_ylabel(ylabel)
        lo = min(vals.values()) if vals else 0.0
        ax.set_ylim(max(0.0, lo - 0.1), None)
        ax.legend(ncol=min(4, len(series)), loc="lower right")
        if title:
            ax.set_title(title)
    return fig


def sweep_line(rows: list[dict], x_key: str, y_key: str, xlabel: str, ylabel: str, title: str = "",
               log_x: bool = False, ref: float | None = None):
    """One line per workload over the swept axis."""
    fig, ax = _new()
    with plt.rc_context(params):
        for r_key in dict.fromkeys((r["model"], r["seq_len"]) for r in rows):
            pts = sorted((r[x_key], r[y_key]) for r in rows if (r["model"], r["seq_len"]) == r_key)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=f"{r_key[0]} {r_key[1] // 1024}K")
        if log_x:
            ax.set_xscale("log", base=2)
            xs = sorted({r[x_key] for r in rows})
            ax.set_xticks(xs)
            ax.set_xticklabels([str(x) for x in xs])
        if ref is not None:
            ax.axhline(ref, color="0.6", lw=0.8, ls="--")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        if title:
            ax.set_title(title)
    return fig


def scenario_figure(kind: str, rows: list[dict], title: str = ""):
    if kind == "intra-rack":
        return grouped_bars(rows, "arch", title=title)
    if kind == "inter-rack":
        return grouped_bars(rows, "strategy", title=title)
    if kind == "bandwidth-sweep":
        return sweep_line(rows, "inter_rack_lanes", "relative", "inter-rack lanes per NPU",
                          "relative throughput", title, log_x=True, ref=1.0)
    if kind == "linearity":
        return sweep_line(rows, "npus", "linearity_pct", "NPUs", "linearity (%)", title, log_x=True, ref=100.0)
    raise ValueError(f"no figure for scenario kind {kind!r}")


def traffic_figure(rows: list[dict], title: str = ""):
    """Horizontal bars of the traffic share per parallelism kind."""
    fig, ax = _new()
    with plt.rc_context(params):
        kinds = [r["parallelism"] for r in rows]
        pct = [r["traffic_pct"] for r in rows]
        ax.barh(kinds[::-1], pct[::-1], color=colors[1])
        for y, v in enumerate(pct[::-1]):
            ax.text(v + 0.5, y, f"{v:.2f}%", va="center", fontsize=8)
        ax.set_xlabel("share of traffic (%)")
        ax.set_xlim(0, max(pct + [1.0]) * 1.15)
        if title:
            ax.set_title(title)
    return fig


def savings_figure(reduction: dict[str, float], title: str = ""):
    fig, ax = _new()
    with plt.rc_context(params):
        keys = list(reduction)
        vals = [100.0 * reduction[k] for k in keys]
        ax.bar(keys, vals, color=[colors[0] if v >= 0 else colors[4] for v in vals])
        ax.axhline(0, color="0.3", lw=0.8)
        ax.set_ylabel("reduction vs baseline (%)")
        ax.tick_params(axis="x", rotation=20)
        if title:
            ax.set_title(title)
    return fig
