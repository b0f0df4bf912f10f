"""Static figures written next to the CSV / JSON-lines outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def plot_lifetimes(rows: Sequence[dict], path, title: str = "") -> Path:
    """Mean lifetime against error rate, with the unprotected-qubit baseline.

    ``rows`` are dicts with ``p``, ``mean_lifetime``, ``stderr`` and ``baseline``.
    """
    path = Path(path)
    rows = sorted(rows, key=lambda r: r["p"])
    ps = [r["p"] for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.errorbar(
            ps, [r["mean_lifetime"] for r in rows], yerr=[r["stderr"] for r in rows],
            marker="o", ms=4, capsize=2, label="decoded logical qubit",
        )
        ax.plot(ps, [r["baseline"] for r in rows], "k--", lw=1, label="single faulty qubit")
        ax.set_yscale("log")
        ax.set_xlabel("error rate p")
        ax.set_ylabel("average lifetime (syndromes)")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path


def plot_training_curves(records, path) -> Path:
    """Rolling-average training lifetime per grid point."""
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        plotted = [rec for rec in records if rec.rolling]
        for rec in plotted:
            ax.plot(rec.rolling, lw=1, label=f"#{rec.grid_index}")
        ax.set_xlabel("episode")
        ax.set_ylabel("rolling average lifetime")
        if 0 < len(plotted) <= 10:
            ax.legend(frameon=False, ncol=2)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path
