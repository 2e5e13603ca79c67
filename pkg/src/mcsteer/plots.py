"""Matplotlib figures saved alongside the delimited reports.

All figures render through the Agg backend with fixed sizes and no
timestamps, so the PNG bytes are as reproducible as the numbers behind
them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .control import ClosedLoopResult
from .network import TrainLog
from .tracks import Track
from .uncertainty import BinnedReport

_DPI = 110


def _save(fig, path: str) -> None:
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_loss_figure(path: str, logs: dict[str, TrainLog]) -> None:
    """Training and validation MSE per epoch, one curve pair per label."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label in sorted(logs):
        log = logs[label]
        epochs = [e.epoch + 1 for e in log.epochs]
        ax.plot(epochs, [e.train_mse for e in log.epochs], label=f"{label} train")
        ax.plot(epochs, [e.val_mse for e in log.epochs], linestyle="--",
                label=f"{label} val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (standardized labels)")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def save_binned_figure(path: str, report: BinnedReport) -> None:
    """Counts, mean prediction, and mean variance against the label bins."""
    centers = (report.edges[:-1] + report.edges[1:]) / 2.0
    widths = np.diff(report.edges)
    fig, axes = plt.subplots(3, 1, figsize=(7.0, 8.0), sharex=True)
    axes[0].bar(centers, report.counts, width=widths * 0.9, color="#777777")
    axes[0].set_ylabel("count")
    occupied = report.counts > 0
    axes[1].plot(centers[occupied], report.mean_prediction[occupied], marker="o")
    axes[1].plot(centers, centers, linestyle=":", color="black", linewidth=0.8)
    axes[1].set_ylabel("mean prediction")
    axes[2].plot(centers[occupied], report.mean_variance[occupied], marker="o",
                 color="#b04040")
    axes[2].set_ylabel("mean variance")
    axes[2].set_xlabel("true inverse turning radius")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def save_simulation_figure(path: str, track: Track, result: ClosedLoopResult) -> None:
    """Top-down trajectory over the centerline plus the handover timeline."""
    fig, (ax_map, ax_sigma) = plt.subplots(
        2, 1, figsize=(7.0, 8.0), gridspec_kw={"height_ratios": [3, 1]})
    line = track.centerline(step=0.5)
    ax_map.plot(line[:, 0], line[:, 1], color="#999999", linewidth=1.0,
                label="centerline")
    if result.records:
        xs = [r.x for r in result.records]
        ys = [r.y for r in result.records]
        ax_map.plot(xs, ys, color="#2060c0", linewidth=1.2, label="vehicle")
        ax_map.plot(xs[0], ys[0], marker="o", color="#208040")
        ax_map.plot(xs[-1], ys[-1], marker="x", color="#c03030")
    ax_map.set_aspect("equal")
    ax_map.set_xlabel("x [m]")
    ax_map.set_ylabel("y [m]")
    ax_map.legend(loc="best")
    ax_map.set_title(f"status: {result.status}")

    if result.records:
        ticks = [r.tick for r in result.records]
        ax_sigma.plot(ticks, [r.sigma for r in result.records], label="sigma")
        ax_sigma.plot(ticks, [abs(r.cross_track) for r in result.records],
                      label="|cross track|", linestyle="--")
    ax_sigma.set_xlabel("tick")
    ax_sigma.set_ylim(bottom=0.0)
    ax_sigma.grid(True, alpha=0.3)
    ax_sigma.legend(loc="best")
    fig.tight_layout()
    _save(fig, path)
