"""Static figures for the CLI reports (Agg backend, PNG files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "figure.figsize": (5.0, 3.2),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
    "font.family": "serif",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}


def _save(fig, path):
    # no Software/date metadata so reruns give identical bytes
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_series(path, x, series: dict, xlabel: str, ylabel: str, logy: bool = False, title=None):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            y = np.asarray(y, dtype=float)
            if logy:
                keep = y > 0
                ax.semilogy(np.asarray(x)[keep], y[keep], label=label)
            else:
                ax.plot(x, y, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False)
        return _save(fig, path)


def plot_partition(path, rows):
    """Multiplier of each block against |k|."""
    by_block = {}
    for j, k, val in rows:
        by_block.setdefault(j, ([], []))
        by_block[j][0].append(k)
        by_block[j][1].append(val)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for j, (k, v) in sorted(by_block.items()):
            ax.plot(k, v, marker=".", markersize=3, label=f"j={j}")
        ax.set_xlabel("|k|")
        ax.set_ylabel("multiplier")
        ax.legend(frameon=False, fontsize="small")
        return _save(fig, path)


def plot_running_worst(path, report):
    """Running maximum of each ratio form against the trial count."""
    forms = {}
    for s in report.samples:
        if s["ratio"] is None:
            continue
        forms.setdefault(s["form"], {})
        prev = forms[s["form"]].get(s["trial"], 0.0)
        forms[s["form"]][s["trial"]] = max(prev, s["ratio"])
    series = {}
    for form, per_trial in forms.items():
        trials = np.arange(report.trials)
        vals = np.array([per_trial.get(i, 0.0) for i in trials])
        series[form] = np.maximum.accumulate(vals)
    return plot_series(path, np.arange(1, report.trials + 1), series, "trials", "worst ratio",
                       title=report.name)


def plot_blocks(path, per_block, ylabel="2^{js} ||Delta_j f||"):
    j = [b[0] for b in per_block]
    v = [b[1] for b in per_block]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.bar(j, v)
        ax.set_xlabel("block j")
        ax.set_ylabel(ylabel)
        return _save(fig, path)
