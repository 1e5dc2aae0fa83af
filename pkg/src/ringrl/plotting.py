"""Learning-curve tables and figures."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed salt and no timestamp so identical summaries give identical SVG bytes
SVG_RC = {"svg.hashsalt": "ringrl", "svg.fonttype": "path"}


def plot_learning_curves(summary: dict, ax=None, statistic: str = "mean"):
    if ax is None:
        fig, ax = plt.subplots(figsize=(7, 4.2))
    else:
        fig = ax.figure
    for variant in sorted(summary):
        curve = summary[variant][statistic]
        ax.plot(range(len(curve)), curve, label=variant, linewidth=1.2)
    ax.set_xlabel("Episode")
    ax.set_ylabel(f"{statistic.capitalize()} return")
    ax.legend(frameon=False, fontsize="small")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    return fig


def emit_curves(summary: dict, path) -> tuple[Path, Path]:
    """Write ``variant,episode,mean,median`` rows to ``path`` and a chart next to it.

    The chart goes to the same stem with an ``.svg`` suffix. Returns both paths.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "episode", "mean", "median"])
        for variant in sorted(summary):
            s = summary[variant]
            for ep, (mean, median) in enumerate(zip(s["mean"], s["median"])):
                w.writerow([variant, ep, repr(float(mean)), repr(float(median))])
    svg_path = path.with_suffix(".svg")
    with matplotlib.rc_context(SVG_RC):
        fig = plot_learning_curves(summary)
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path, svg_path
