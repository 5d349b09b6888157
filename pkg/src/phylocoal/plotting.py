"""Trajectory-band figure rendered with matplotlib (Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .diagnostics import TrajectorySummary


def plot_trajectory_summary(summary: TrajectorySummary, path: str) -> None:
    """Save the posterior band figure; format follows the file extension."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.fill_between(
        summary.times,
        summary.lower,
        summary.upper,
        color="#9ecae1",
        alpha=0.7,
        label="95% credible band",
    )
    ax.plot(summary.times, summary.median, color="#08519c", lw=1.5, label="posterior median")
    if summary.truth is not None:
        ax.plot(summary.times, summary.truth, "k--", lw=1.2, label="truth")
    ax.set_yscale("log")
    ax.set_xlabel("time before most recent sample")
    ax.set_ylabel("effective population size")
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
