from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .rollout import MetricsReport  # noqa: E402


def plot_mse_curves(reports: Sequence[MetricsReport], path: Path, *, horizon: int | None = None) -> Path:
    """Per-frame MSE against the prediction step, one line per report."""
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        for report in reports:
            h = horizon or report.horizons[-1]
            curve = report.curves[h]["mse"]
            ax.plot(range(1, len(curve) + 1), curve, label=report.label)
        ax.set_xlabel("predicted frame")
        ax.set_ylabel("MSE per frame")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
    finally:
        plt.close(fig)
    return path


def plot_order_sweep(orders: Sequence[int], values: Sequence[float], path: Path, *, metric: str = "mse") -> Path:
    """Metric against the Taylor expansion order."""
    if len(orders) != len(values):
        raise ValueError("orders and values must have the same length")

    fig, ax = plt.subplots(figsize=(5, 3.5))
    try:
        ax.plot(list(orders), list(values), marker="o")
        ax.set_xticks(list(orders))
        ax.set_xlabel("expansion order")
        ax.set_ylabel(metric.upper())
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
    finally:
        plt.close(fig)
    return path
