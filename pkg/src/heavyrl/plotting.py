"""Regret-curve figures (mean with a shaded +-1 std band per algorithm)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (math.sqrt(5) - 1.0) / 2.0
fig_width = 5.0

COLORS = ["#0072B2", "#D55E00", "#009E73", "#CC79A7", "#E69F00", "#56B4E9", "#000000"]

style = {
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "font.family": "serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.prop_cycle": matplotlib.cycler(color=COLORS),
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "pdf.fonttype": 42,
    "svg.hashsalt": "heavyrl",
    "savefig.bbox": "tight",
}


def regret_figure(curves: dict, path, xlabel: str = "round", ylabel: str = "cumulative regret",
                  title: str | None = None, fmt: str = "pdf") -> Path:
    """Render {label: (n_seeds, n_steps) array} as mean +- std bands."""
    path = Path(path)
    if path.suffix != "." + fmt:
        path = path.with_suffix("." + fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(style):
        fig, ax = plt.subplots()
        for label, runs in curves.items():
            runs = np.atleast_2d(np.asarray(runs, dtype=float))
            x = np.arange(1, runs.shape[1] + 1)
            mean, std = runs.mean(axis=0), runs.std(axis=0)
            line, = ax.plot(x, mean, label=label)
            ax.fill_between(x, mean - std, mean + std, color=line.get_color(), alpha=0.2,
                            linewidth=0)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left")
        fig.savefig(path, format=fmt, metadata={"CreationDate": None} if fmt == "pdf" else None)
        plt.close(fig)
    return path
