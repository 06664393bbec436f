"""Static four-panel figure of a trial log."""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiment import TrialLog  # noqa: E402

logger = logging.getLogger(__name__)


def exit_spans(log: TrialLog) -> list[tuple[float, float]]:
    """
    Time intervals with the CoP outside the DZ.

    Each span starts at the first outside sample and ends at the first sample
    back inside, or at the last sample when the CoP never returns.
    """
    t = log.frame["t"].to_numpy()
    outside = log.dz_distance() > 0
    edges = np.diff(outside.astype(int), prepend=0, append=0)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [
        (float(t[s]), float(t[min(e, t.size - 1)])) for s, e in zip(starts, ends)
    ]


def plot_trial(log: TrialLog, path: str | Path, title: str | None = None) -> Path:
    """
    Draw CoP and DZ, hand forces, handle and reference positions, and the
    elbow angle, stacked over a shared time axis with DZ exits shaded.

    Raises:
        ValueError: If the log has no samples.
    """
    if len(log) == 0:
        raise ValueError("Cannot plot an empty log")
    f = log.frame
    t = f["t"]
    fig, axes = plt.subplots(4, 1, sharex=True, figsize=(7.0, 9.0))

    ax = axes[0]
    ax.plot(t, f["cop_x"], label="CoP x")
    ax.plot(t, f["dz_lo"], "k--", linewidth=0.8, label="DZ")
    ax.plot(t, f["dz_hi"], "k--", linewidth=0.8)
    ax.set_ylabel("CoP [m]")

    ax = axes[1]
    for axis in ("x", "y", "z"):
        ax.plot(t, f[f"f_{axis}"], label=f"F{axis}")
    ax.set_ylabel("Force [N]")

    ax = axes[2]
    ax.plot(t, f["ee_x"], label="EE x")
    ax.plot(t, f["ee_z"], label="EE z")
    ax.plot(t, f["ref_x"], ":", label="ref x")
    ax.plot(t, f["ref_z"], ":", label="ref z")
    ax.set_ylabel("Position [m]")

    ax = axes[3]
    ax.plot(t, f["elbow"], label="elbow")
    ax.set_ylim(-np.pi, 0.0)
    ax.set_ylabel("Elbow [rad]")
    ax.set_xlabel("Time [s]")

    for ax in axes:
        for start, end in exit_spans(log):
            ax.axvspan(start, end, color="tab:red", alpha=0.15)
        ax.legend(loc="upper right", fontsize="small")
        ax.grid(True, alpha=0.3)
    if title:
        axes[0].set_title(title)

    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.info("Figure written to %s", path)
    return path
