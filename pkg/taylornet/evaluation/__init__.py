from .ablation import AblationReport, Variant, parse_suite, run_ablation
from .metrics import METRICS, MetricAccumulator, frame_metrics, per_frame_metrics, psnr, ssim
from .plots import plot_mse_curves, plot_order_sweep
from .rollout import MetricsReport, persistence_baseline, rollout_eval
from .visuals import VisualGrid, build_grid, export_visuals, render_grid

__all__ = (
    "METRICS",
    "AblationReport",
    "MetricAccumulator",
    "MetricsReport",
    "Variant",
    "VisualGrid",
    "build_grid",
    "export_visuals",
    "frame_metrics",
    "parse_suite",
    "per_frame_metrics",
    "persistence_baseline",
    "plot_mse_curves",
    "plot_order_sweep",
    "psnr",
    "render_grid",
    "rollout_eval",
    "run_ablation",
    "ssim",
)
