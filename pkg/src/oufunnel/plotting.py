"""Figure rendering for persisted run records.

Renders the standard report figures next to the delimited output of a run:
tracking error against the funnel boundary, control input, early/late
snapshot fans and the moment series.  Presentation only; nothing here is
load-bearing for the checks.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LinearSegmentedColormap

__all__ = ["render_record", "FIGURE_NAMES"]

FIGURE_NAMES = ["error", "input", "snapshots_early", "snapshots_late", "moments"]

_EARLY_CMAP = LinearSegmentedColormap.from_list("early", ["red", "black"])
_LATE_CMAP = LinearSegmentedColormap.from_list("late", ["black", "turquoise"])


def _plot_error(record, ax):
    for j in range(record.dim):
        ax.plot(record.t, record.e[:, j], label=f"e{j+1}")
    if not np.all(np.isnan(record.funnel)):
        err_norm = np.linalg.norm(record.e, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            boundary = np.where(
                record.funnel > 0, err_norm / record.funnel, np.nan
            )
        # funnel value is phi |e|, so the boundary 1/phi is |e| / value
        ax.plot(record.t, boundary, "k--", lw=0.8, label="funnel boundary")
        ax.plot(record.t, -boundary, "k--", lw=0.8)
        finite = boundary[np.isfinite(boundary)]
        if finite.size:
            cap = 1.5 * float(np.max(np.abs(record.e[np.isfinite(record.e)])) + 0.1)
            ax.set_ylim(-min(cap, np.max(finite) * 1.1), min(cap, np.max(finite) * 1.1))
    ax.set_xlabel("t")
    ax.set_ylabel("tracking error")
    ax.legend(loc="best", fontsize=8)


def _plot_input(record, ax):
    for j in range(record.dim):
        ax.plot(record.t, record.u[:, j], label=f"u{j+1}")
    ax.set_xlabel("t")
    ax.set_ylabel("input")
    ax.legend(loc="best", fontsize=8)


def _plot_snapshots(record, ax, early=True):
    snaps = [s for s in record.snapshots if (s[0] <= 1.5) == early]
    if not snaps:
        ax.set_axis_off()
        ax.text(0.5, 0.5, "no snapshots", ha="center", va="center")
        return
    cmap = _EARLY_CMAP if early else _LATE_CMAP
    tmin = min(s[0] for s in snaps)
    tmax = max(s[0] for s in snaps)
    span = (tmax - tmin) or 1.0
    for t, x, p in snaps:
        ax.plot(x, p, color=cmap((t - tmin) / span), lw=0.7)
    ax.set_xlabel("x")
    ax.set_ylabel("p(t, x)")
    ax.set_title(f"t in [{tmin:g}, {tmax:g}]", fontsize=9)


def _plot_moments(record, ax):
    ax.plot(record.t, record.mass, label="mass")
    if not np.all(np.isnan(record.cov)):
        for j in range(record.dim):
            ax.plot(record.t, record.cov[:, j, j], label=f"cov_{j+1}{j+1}")
    if not np.all(np.isnan(record.min_density)):
        ax.plot(record.t, record.min_density, label="min density")
    ax.set_xlabel("t")
    ax.legend(loc="best", fontsize=8)


def render_record(record, out_dir, fmt="svg"):
    """Write the report figures for a record; returns the file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    painters = {
        "error": _plot_error,
        "input": _plot_input,
        "snapshots_early": lambda r, ax: _plot_snapshots(r, ax, early=True),
        "snapshots_late": lambda r, ax: _plot_snapshots(r, ax, early=False),
        "moments": _plot_moments,
    }
    paths = []
    for name in FIGURE_NAMES:
        fig, ax = plt.subplots(figsize=(5.0, 5.0 * (math.sqrt(5) - 1) / 2))
        painters[name](record, ax)
        fig.tight_layout()
        path = out_dir / f"{name}.{fmt}"
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths
