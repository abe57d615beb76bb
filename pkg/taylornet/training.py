import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader

from .checkpoint import save_checkpoint
from .core.config import TrainConfig
from .core.models import LossTerms
from .data.generators import MovingDigitsDataset
from .data.sprites import load_digit_sprites
from .exceptions import DivergenceError
from .model import TaylorNet
from .pde_model import PdeModel

logger = logging.getLogger(__name__)

LOG_COLUMNS: Final = ("epoch", "step", "total", "image", "moment", "mode", "wall_time")
TRAIN_LOG: Final = "train_log.csv"
FINAL_CHECKPOINT: Final = "model.pt"


def compute_loss(
    params: PdeModel, predictions: torch.Tensor, targets: torch.Tensor, *, moment_weight: float = 1.0
) -> LossTerms:
    """
    Combined objective: mean squared image error plus the weighted moment loss of the derivative bank.

    Args:
        params (PdeModel): PDE model whose derivative bank carries the moment constraint.
        predictions (torch.Tensor): Predicted frames.
        targets (torch.Tensor): Ground-truth frames, same shape as `predictions`.
        moment_weight (float): Weight lambda of the moment term.

    Raises:
        ValueError: If the shapes differ or `moment_weight` is negative.
    """
    if predictions.shape != targets.shape:
        raise ValueError(f"Prediction shape {tuple(predictions.shape)} differs from target {tuple(targets.shape)}")
    if moment_weight < 0:
        raise ValueError(f"moment_weight must be >= 0, got {moment_weight}")

    image = F.mse_loss(predictions, targets)
    moment = params.moment_loss().to(image.dtype)
    return LossTerms(image + moment_weight * moment, image, moment)


@dataclass(slots=True)
class EpochSummary:
    epoch: int
    total: float
    image: float
    moment: float
    teaching_fraction: float


@dataclass(slots=True)
class TrainResult:
    """Artifacts and loss history of a finished run."""

    checkpoint: Path
    log_path: Path
    epochs: list[EpochSummary] = field(default_factory=list)
    steps: int = 0
    initial_moment: float = math.nan

    @property
    def final(self) -> EpochSummary:
        return self.epochs[-1]


class TrainingLog:
    """Append-only CSV loss log."""

    def __init__(self, path: Path):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        is_new = not path.exists() or path.stat().st_size == 0
        self._file = path.open("a", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file)
        if is_new:
            self._writer.writerow(LOG_COLUMNS)

    def append(self, epoch: int, step: int, terms: LossTerms, mode: str, wall_time: float):
        self._writer.writerow(
            (
                epoch,
                step,
                f"{terms.total.item():.10e}",
                f"{terms.image.item():.10e}",
                f"{terms.moment.item():.10e}",
                mode,
                f"{wall_time:.3f}",
            )
        )

    def close(self):
        self._file.close()


def sample_teaching(rng: np.random.Generator, probability: float) -> bool:
    return bool(rng.random() < probability)


def checkpoint_metadata(config: TrainConfig, epoch: int, steps: int) -> dict:
    return {"epoch": epoch, "steps": steps, "config": config.to_dict(), "config_digest": config.digest()}


def train(
    config: TrainConfig,
    out_dir: Path,
    *,
    model: TaylorNet | None = None,
    sprites: np.ndarray | None = None,
) -> TrainResult:
    """
    Train a TaylorNet on on-the-fly bouncing digits.

    Every batch (or epoch, per `teacher_granularity`) draws the teaching mode with the
    scheduled probability; in teaching mode the prediction window consumes ground-truth
    frames, otherwise the model's own outputs. Parameters, data and mode draws are all
    derived from `config.seed`.

    Args:
        config (TrainConfig): Run configuration.
        out_dir (Path): Receives `train_log.csv`, `checkpoints/` and the final `model.pt`.
        model (TaylorNet | None): Start from this model instead of a freshly seeded one.
        sprites (np.ndarray | None): Sprite set; defaults to the built-in glyphs at the preset's sprite size.

    Raises:
        DivergenceError: If a loss becomes non-finite.
    """
    torch.manual_seed(config.seed)
    device = torch.device(config.device)
    preset = config.data_preset
    if model is None:
        model = TaylorNet(config.model_config())
    model.to(device).train()
    if sprites is None:
        sprites = load_digit_sprites(size=preset.sprite_size)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    mode_rng = np.random.default_rng([config.seed, 1])
    t_in, t_out = config.input_length, config.output_length

    out_dir.mkdir(parents=True, exist_ok=True)
    log = TrainingLog(out_dir / TRAIN_LOG)
    result = TrainResult(checkpoint=out_dir / FINAL_CHECKPOINT, log_path=log.path)
    with torch.no_grad():
        result.initial_moment = model.pde.moment_loss().item()

    logger.info(
        "Training %s on preset '%s' for %d epochs (%d sequences/epoch, batch %d)",
        config.ablation, preset.name, config.epochs, config.epoch_size, config.batch_size,
    )
    started = time.perf_counter()
    try:
        for epoch in range(config.epochs):
            dataset = MovingDigitsDataset(
                sprites, preset, length=t_in + t_out, size=config.epoch_size, seed=config.seed, epoch=epoch
            )
            loader = DataLoader(dataset, batch_size=config.batch_size, shuffle=False, num_workers=config.num_workers)
            probability = config.teacher_probability(epoch)
            epoch_teaching = sample_teaching(mode_rng, probability)

            sums = np.zeros(3)
            teaching_steps = 0
            batches = 0
            for step, frames in enumerate(loader):
                frames = frames.to(device)
                inputs, targets = frames[:, :t_in], frames[:, t_in:]
                teaching = (
                    epoch_teaching if config.teacher_granularity == "epoch" else sample_teaching(mode_rng, probability)
                )

                predictions = model(inputs, t_out, targets if teaching else None)
                terms = compute_loss(model.pde, predictions, targets, moment_weight=config.moment_weight)
                if not torch.isfinite(terms.total):
                    raise DivergenceError(
                        f"Loss became non-finite at epoch {epoch}, step {step} "
                        f"(image={terms.image.item()}, moment={terms.moment.item()})",
                        epoch=epoch,
                        step=step,
                    )

                optimizer.zero_grad()
                terms.total.backward()
                optimizer.step()

                mode = "teaching" if teaching else "free"
                log.append(epoch, step, terms, mode, time.perf_counter() - started)
                sums += (terms.total.item(), terms.image.item(), terms.moment.item())
                teaching_steps += teaching
                batches += 1
                result.steps += 1

            total, image, moment = sums / max(batches, 1)
            result.epochs.append(EpochSummary(epoch, total, image, moment, teaching_steps / max(batches, 1)))
            logger.info(
                "epoch %d/%d: total=%.6f image=%.6f moment=%.3e teaching=%.2f",
                epoch + 1, config.epochs, total, image, moment, teaching_steps / max(batches, 1),
            )

            if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0 and epoch + 1 < config.epochs:
                path = out_dir / "checkpoints" / f"epoch_{epoch + 1:04d}.pt"
                save_checkpoint(path, model, metadata=checkpoint_metadata(config, epoch + 1, result.steps))
                logger.debug("Saved %s", path)
    finally:
        log.close()

    save_checkpoint(result.checkpoint, model, metadata=checkpoint_metadata(config, config.epochs, result.steps))
    logger.info("Finished %d steps in %.1fs, checkpoint %s", result.steps, time.perf_counter() - started, result.checkpoint)
    return result
