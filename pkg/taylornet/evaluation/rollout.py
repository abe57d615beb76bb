import csv
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch

from ..core.models import VideoBatch
from ..model import TaylorNet
from .metrics import METRICS, MetricAccumulator

logger = logging.getLogger(__name__)

Predictor = Callable[[torch.Tensor, int], torch.Tensor]


@dataclass(slots=True)
class MetricsReport:
    """
    Rollout metrics per horizon.

    Attributes:
        aggregates (dict[int, dict[str, float]]): Horizon -> metric means over sequences and frames.
        curves (dict[int, dict[str, list[float]]]): Horizon -> per-frame metric means.
        num_sequences (int): Evaluated sequences.
        config_digest (str | None): Digest of the training config of the evaluated model.
        checkpoint_id (str | None): Checkpoint the model was loaded from.
        label (str): Model or baseline name.
    """

    aggregates: dict[int, dict[str, float]] = field(default_factory=dict)
    curves: dict[int, dict[str, list[float]]] = field(default_factory=dict)
    num_sequences: int = 0
    config_digest: str | None = None
    checkpoint_id: str | None = None
    label: str = "taylornet"

    @property
    def horizons(self) -> list[int]:
        return sorted(self.aggregates)

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "num_sequences": self.num_sequences,
            "config_digest": self.config_digest,
            "checkpoint_id": self.checkpoint_id,
            "aggregates": {str(h): self.aggregates[h] for h in self.horizons},
            "curves": {str(h): self.curves[h] for h in self.horizons},
        }

    def write_csv(self, path: Path) -> Path:
        """One row per horizon: `mse`/`mae` are per-frame sums averaged over frames; `mse_sequence` sums over frames."""
        columns = [*METRICS, "mse_sequence"]
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["label", "horizon", *columns])
            for h in self.horizons:
                writer.writerow([self.label, h, *(f"{self.aggregates[h][name]:.6f}" for name in columns)])
        return path

    def write_curves_csv(self, path: Path) -> Path:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["label", "horizon", "frame", *METRICS])
            for h in self.horizons:
                for t in range(h):
                    writer.writerow([self.label, h, t + 1, *(f"{self.curves[h][name][t]:.6f}" for name in METRICS)])
        return path

    def summary(self) -> str:
        lines = [f"{self.label}: {self.num_sequences} sequences"]
        for h in self.horizons:
            a = self.aggregates[h]
            lines.append(
                f"  {h:>3} frames  MSE {a['mse']:.3f} (sum over frames {a['mse_sequence']:.3f})  MAE {a['mae']:.3f}  "
                f"SSIM {a['ssim']:.4f}  PSNR {a['psnr']:.2f}  BCE {a['bce']:.3f}"
            )
        return "\n".join(lines)


def _check_horizons(horizons: Sequence[int]) -> list[int]:
    if not horizons:
        raise ValueError("At least one horizon is required")
    if any(h < 1 for h in horizons):
        raise ValueError(f"Horizons must be >= 1, got {list(horizons)}")
    return sorted(set(horizons))


def evaluate_predictor(
    predict: Predictor,
    dataset: VideoBatch,
    horizons: Sequence[int],
    *,
    input_length: int,
    batch_size: int = 16,
    label: str = "taylornet",
) -> MetricsReport:
    """Evaluate any (inputs, n_future) -> frames predictor over the dataset.

    The longest horizon is predicted once; shorter horizons use its prefix.
    """
    horizons = _check_horizons(horizons)
    longest = horizons[-1]
    _, length, *_ = dataset.shape
    if input_length + longest > length:
        raise ValueError(f"Horizon {longest} needs {input_length + longest} frames, dataset sequences have {length}")

    accumulator = MetricAccumulator(longest)
    for start in range(0, len(dataset), batch_size):
        frames = dataset.frames[start : start + batch_size]
        inputs, targets = frames[:, :input_length], frames[:, input_length : input_length + longest]
        accumulator.add(predict(inputs, longest), targets)

    report = MetricsReport(num_sequences=accumulator.count, label=label)
    for h in horizons:
        report.aggregates[h] = accumulator.aggregate(h)
        report.curves[h] = accumulator.curves(h)
    return report


def rollout_eval(
    model: TaylorNet,
    dataset: VideoBatch,
    horizons: Sequence[int],
    *,
    batch_size: int = 16,
    config_digest: str | None = None,
    checkpoint_id: str | None = None,
) -> MetricsReport:
    """
    Free-running rollout metrics for every horizon.

    Raises:
        ValueError: If a horizon is < 1, the dataset is too short, or the frame geometry does not match the model.
    """
    if dataset.shape[2:] != model.config.frame_shape:
        raise ValueError(f"Dataset frames {dataset.shape[2:]} do not match the model's {model.config.frame_shape}")

    device = next(model.parameters()).device
    model.eval()

    @torch.no_grad()
    def predict(inputs: torch.Tensor, n: int) -> torch.Tensor:
        return model(inputs.to(device), n).cpu()

    report = evaluate_predictor(
        predict, dataset, horizons, input_length=model.config.input_length, batch_size=batch_size
    )
    report.config_digest = config_digest
    report.checkpoint_id = checkpoint_id
    logger.info(report.summary())
    return report


def persistence_baseline(
    dataset: VideoBatch, horizons: Sequence[int], *, input_length: int = 10, batch_size: int = 64
) -> MetricsReport:
    """Metrics of repeating the last conditioning frame for every future frame."""

    def predict(inputs: torch.Tensor, n: int) -> torch.Tensor:
        return inputs[:, -1:].expand(-1, n, -1, -1, -1)

    return evaluate_predictor(
        predict, dataset, horizons, input_length=input_length, batch_size=batch_size, label="persistence"
    )
