"""
Figure and animation export.

A grid has one column per frame index c = 0 .. t+n-1 and the rows

    input       conditioning frame c (c < t)
    target      ground-truth frame c (c >= t)
    prediction  model output for frame c (c >= 1)
    taylor      channel mean of the Taylor feature predicted for frame c
    residual    channel mean of the residual feature predicted for frame c
    |diff|x10   |prediction - target| * 10 clamped to [0, 1] (c >= t)

optionally followed by one row per Taylor expansion order. Feature rows are min-max
normalized per row. Empty cells are black.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from ..exceptions import DataError
from ..model import SequenceProbe, TaylorNet

logger = logging.getLogger(__name__)

DIFF_GAIN = 10.0
_PAD = 2


@dataclass(slots=True)
class VisualGrid:
    """(rows, cols, H, W) cell intensities in [0, 1] with a label per row."""

    cells: np.ndarray
    row_labels: list[str]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape[0], self.cells.shape[1]


def _feature_frame(feature: torch.Tensor, size: tuple[int, int]) -> np.ndarray:
    """(C, h, w) latent feature to an (H, W) channel-mean image."""
    mean = feature.detach().to(torch.float64).mean(0, keepdim=True)[None]
    return F.interpolate(mean, size=size, mode="nearest")[0, 0].cpu().numpy()


def normalize_row(row: np.ndarray, present: list[int]) -> np.ndarray:
    """Min-max normalize the present cells of a (cols, H, W) row to [0, 1]."""
    out = np.zeros_like(row)
    if not present:
        return out
    values = row[present]
    lo, hi = values.min(), values.max()
    if hi > lo:
        out[present] = (values - lo) / (hi - lo)
    return out


def build_grid(
    inputs: torch.Tensor,
    targets: torch.Tensor,
    predictions: torch.Tensor,
    warmup: torch.Tensor | None,
    probe: SequenceProbe | None,
    *,
    index: int = 0,
    per_order: bool = False,
) -> VisualGrid:
    """Assemble the grid of sequence `index` from (B, T, C, H, W) frames and rollout probes."""
    t, n = inputs.shape[1], targets.shape[1]
    h, w = inputs.shape[-2:]
    cols = t + n

    def blank() -> np.ndarray:
        return np.zeros((cols, h, w), dtype=np.float64)

    def image(frame: torch.Tensor) -> np.ndarray:
        return frame.detach().to(torch.float64).mean(0).cpu().numpy()

    input_row, target_row, pred_row, diff_row = blank(), blank(), blank(), blank()
    for c in range(t):
        input_row[c] = image(inputs[index, c])
    for k in range(n):
        c = t + k
        target_row[c] = image(targets[index, k])
        pred_row[c] = image(predictions[index, k])
        diff_row[c] = np.clip(np.abs(pred_row[c] - target_row[c]) * DIFF_GAIN, 0.0, 1.0)
    if warmup is not None:
        for k in range(warmup.shape[1]):
            pred_row[k + 1] = image(warmup[index, k])

    rows = [input_row, target_row, pred_row]
    labels = ["input", "target", "prediction"]
    steps = range(min(cols - 1, t - 1 + n))
    for label, features in (("taylor", probe.taylor if probe else []), ("residual", probe.residual if probe else [])):
        row, present = blank(), []
        for s in steps:
            if s < len(features):
                row[s + 1] = _feature_frame(features[s][index], (h, w))
                present.append(s + 1)
        rows.append(normalize_row(row, present))
        labels.append(label)
    rows.append(diff_row)
    labels.append(f"|diff|x{DIFF_GAIN:g}")

    if per_order and probe is not None and probe.terms:
        for order in range(len(probe.terms[0])):
            row, present = blank(), []
            for s, terms in enumerate(probe.terms):
                row[s + 1] = _feature_frame(terms[order][index], (h, w))
                present.append(s + 1)
            rows.append(normalize_row(row, present))
            labels.append(f"order {order}")

    return VisualGrid(np.stack(rows), labels)


def render_grid(grid: VisualGrid, *, scale: int = 2) -> Image.Image:
    """Tile the grid cells into a grayscale image with gray separators."""
    n_rows, n_cols = grid.shape
    h, w = grid.cells.shape[-2:]
    canvas = np.full((n_rows * (h + _PAD) + _PAD, n_cols * (w + _PAD) + _PAD), 0.5)
    for r in range(n_rows):
        for c in range(n_cols):
            top, left = _PAD + r * (h + _PAD), _PAD + c * (w + _PAD)
            canvas[top : top + h, left : left + w] = grid.cells[r, c]

    img = Image.fromarray(np.round(np.clip(canvas, 0, 1) * 255).astype(np.uint8))
    return img.resize((img.width * scale, img.height * scale), Image.Resampling.NEAREST) if scale > 1 else img


def save_gif(ground_truth: np.ndarray, predicted: np.ndarray, path: Path, *, scale: int = 2, duration: int = 120):
    """Animate (T, H, W) ground truth beside (T, H, W) predictions; missing predictions are black."""
    frames = []
    for truth, pred in zip(ground_truth, predicted, strict=True):
        pair = np.concatenate([truth, np.full((truth.shape[0], _PAD), 0.5), pred], axis=1)
        img = Image.fromarray(np.round(np.clip(pair, 0, 1) * 255).astype(np.uint8))
        frames.append(img.resize((img.width * scale, img.height * scale), Image.Resampling.NEAREST))
    frames[0].save(path, save_all=True, append_images=frames[1:], duration=duration, loop=0)


def export_visuals(
    model: TaylorNet,
    inputs: torch.Tensor,
    targets: torch.Tensor,
    out_dir: Path,
    *,
    prefix: str = "sequence",
    per_order: bool = False,
    scale: int = 2,
) -> list[Path]:
    """
    Roll the model out on (B, t, C, H, W) inputs and write a PNG grid and a GIF per sequence.

    Raises:
        DataError: If a file cannot be written.
    """
    model.eval()
    device = next(model.parameters()).device
    with torch.no_grad():
        rollout = model.rollout(inputs.to(device), targets.shape[1], record=True, record_terms=per_order)

    predictions = rollout.frames.cpu()
    warmup = rollout.warmup.cpu() if rollout.warmup is not None else None
    written: list[Path] = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for index in range(inputs.shape[0]):
            grid = build_grid(inputs, targets, predictions, warmup, rollout.probe, index=index, per_order=per_order)
            png = out_dir / f"{prefix}_{index:03d}.png"
            render_grid(grid, scale=scale).save(png)

            truth = np.concatenate([grid.cells[0, : inputs.shape[1]], grid.cells[1, inputs.shape[1] :]])
            gif = out_dir / f"{prefix}_{index:03d}.gif"
            save_gif(truth, grid.cells[2], gif, scale=scale)
            written += [png, gif]
    except OSError as e:
        raise DataError(f"Cannot write visuals to {out_dir}: {e}") from e

    logger.info("Wrote %d visual files to %s", len(written), out_dir)
    return written
