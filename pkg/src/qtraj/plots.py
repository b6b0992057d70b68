"""Figure rendering for run products.

Everything draws through the Agg backend straight to files; figures are
deliberately plain (single-purpose axes, fixed sizes) so identical runs
produce identical images.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .records import TrajectoryRecord

__all__ = [
    "render_trajectories",
    "render_density_snapshots",
    "render_barrier_series",
    "render_comparison",
]

_SAVE = {"dpi": 130, "metadata": {"Software": "qtraj"}}


def _finish(fig, path) -> None:
    fig.savefig(Path(path), **_SAVE)
    plt.close(fig)


def render_trajectories(record: TrajectoryRecord, path) -> None:
    """All element paths x(t) as thin lines."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for j in range(record.n_elements):
        ax.plot(record.t, record.x[:, j], lw=0.5, color="#1f77b4", alpha=0.6)
    ax.set_xlabel("t (a.u.)")
    ax.set_ylabel("x (bohr)")
    ax.set_title(f"trajectories ({record.engine})")
    fig.tight_layout()
    _finish(fig, path)


def render_density_snapshots(record: TrajectoryRecord, indices, path) -> None:
    """Density with Q, V, and V+Q at the selected sample times."""
    indices = list(indices)
    ncols = 2
    nrows = (len(indices) + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(9.0, 2.6 * nrows), squeeze=False
    )
    for slot, k in enumerate(indices):
        ax = axes[slot // ncols][slot % ncols]
        x = record.x[k]
        ax.plot(x, record.rho[k], ".", ms=3, color="#1f77b4", label="rho")
        twin = ax.twinx()
        twin.plot(x, record.Q[k], "--", lw=1.0, color="#d62728", label="Q")
        twin.plot(x, record.V[k], "-", lw=1.0, color="#2ca02c", label="V")
        twin.plot(
            x, record.V[k] + record.Q[k], "-.", lw=1.0, color="#9467bd", label="V+Q"
        )
        ax.set_title(f"t = {record.t[k]:g}", fontsize=9)
        ax.tick_params(labelsize=8)
        twin.tick_params(labelsize=8)
    for slot in range(len(indices), nrows * ncols):
        axes[slot // ncols][slot % ncols].axis("off")
    fig.suptitle(f"density snapshots ({record.engine})", fontsize=11)
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    _finish(fig, path)


def render_barrier_series(t, veff_cm, band_cm, path) -> None:
    """Effective barrier V(0) + Q(0, t) with the two-state band."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(t, veff_cm, lw=1.2, color="#1f77b4", label="V(0) + Q(0, t)")
    ax.axhline(band_cm[0], ls="--", lw=0.8, color="#7f7f7f")
    ax.axhline(band_cm[1], ls="--", lw=0.8, color="#7f7f7f", label="two-state band")
    ax.set_xlabel("t (a.u.)")
    ax.set_ylabel("effective barrier (cm$^{-1}$)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _finish(fig, path)


def render_comparison(
    rec_a: TrajectoryRecord, rec_b: TrajectoryRecord, highlights, path
) -> None:
    """Highlighted trajectories from both routes on shared axes."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    for c, h in enumerate(highlights):
        j = h - rec_a.index_base
        color = colors[c % len(colors)]
        ax.plot(
            rec_a.t, rec_a.x[:, j], "-", lw=1.2, color=color,
            label=f"#{h} {rec_a.engine}",
        )
        ax.plot(
            rec_b.t, rec_b.x[:, j], "--", lw=1.2, color=color,
            label=f"#{h} {rec_b.engine}",
        )
    ax.set_xlabel("t (a.u.)")
    ax.set_ylabel("x (bohr)")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    _finish(fig, path)
