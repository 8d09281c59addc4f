"""Delimited metric tables and the matplotlib figures that accompany
them in every output directory."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import TimeSeriesWindow
from .evaluate import BenchRow, ForecastReport


def write_metrics_csv(report: ForecastReport, path: str | Path) -> None:
    rows = report.metric_rows()
    rows.append(("seconds_per_window", f"{report.seconds_per_window:.6f}"))
    rows.append(("peak_rss_mib", f"{report.peak_rss_mib:.1f}"))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerows(rows)


def write_bench_csv(row: BenchRow, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerows(row.rows())


def plot_loss_curves(log: list[dict], path: str | Path) -> None:
    epochs = [row["epoch"] for row in log]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [row["train_loss"] for row in log], label="train")
    ax.plot(epochs, [row["val_loss"] for row in log], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("normalized MSE")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("training curves")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_forecast_grid(windows: list[TimeSeriesWindow],
                       predictions: list[np.ndarray], path: str | Path,
                       max_windows: int = 3, max_vars: int = 3) -> None:
    """History, truth, and prediction for a few windows and variables."""
    if not windows or not predictions:
        return
    n_win = min(max_windows, len(windows))
    picks = np.linspace(0, len(windows) - 1, n_win).astype(int)
    n_vars = min(max_vars, windows[0].n_variables)
    fig, axes = plt.subplots(n_win, n_vars,
                             figsize=(4 * n_vars, 2.6 * n_win),
                             squeeze=False)
    for r, wi in enumerate(picks):
        w = windows[wi]
        pred = predictions[wi]
        t_hist = np.arange(w.lookback_len)
        t_fut = np.arange(w.lookback_len, w.lookback_len + w.horizon)
        for c in range(n_vars):
            ax = axes[r][c]
            ax.plot(t_hist, w.lookback[:, c], color="gray", lw=0.9,
                    label="history" if r == c == 0 else None)
            ax.plot(t_fut, w.target[:, c], color="black", lw=1.1,
                    label="actual" if r == c == 0 else None)
            ax.plot(t_fut, pred[:, c], color="tab:red", lw=1.1, ls="--",
                    label="forecast" if r == c == 0 else None)
            if r == 0:
                ax.set_title(f"variable {c}", fontsize=9)
            if c == 0:
                ax.set_ylabel(f"window {w.window_id}", fontsize=9)
            ax.tick_params(labelsize=7)
    handles, labels = axes[0][0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
