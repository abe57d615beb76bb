"""
Frame-quality metrics.

Conventions (frames are (..., C, H, W) arrays in [0, 1]):

    mse, mae   per-frame SUM of squared / absolute pixel errors
    *_pixel    the same errors averaged over pixels
    ssim       11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1,
               valid positions only, averaged over positions and channels
    psnr       10 log10(1 / per-pixel mse); +inf for identical frames
    bce        per-frame sum of binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]
"""

import math
from functools import lru_cache
from typing import Final, Self

import numpy as np
import torch
import torch.nn.functional as F

METRICS: Final = ("mse", "mae", "ssim", "psnr", "bce", "mse_pixel", "mae_pixel")
SSIM_WINDOW: Final = 11
SSIM_SIGMA: Final = 1.5
SSIM_K1: Final = 0.01
SSIM_K2: Final = 0.03
BCE_EPS: Final = 1e-7


def _check_pair(pred: torch.Tensor, target: torch.Tensor):
    if pred.shape != target.shape:
        raise ValueError(f"Prediction shape {tuple(pred.shape)} differs from target {tuple(target.shape)}")
    if pred.ndim < 3:
        raise ValueError(f"Frames must be (..., C, H, W), got shape {tuple(pred.shape)}")
    for name, frames in (("prediction", pred), ("target", target)):
        if frames.numel() and (frames.min() < 0 or frames.max() > 1):
            raise ValueError(f"{name} pixel values must lie in [0, 1]")


@lru_cache(maxsize=4)
def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> torch.Tensor:
    """Normalized 2-D Gaussian window, float64 (size, size)."""
    offsets = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    profile = torch.exp(-(offsets**2) / (2 * sigma * sigma))
    profile /= profile.sum()
    return torch.outer(profile, profile)


def ssim_map(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Local SSIM of (N, C, H, W) frames at every valid window position, (N, C, H-10, W-10)."""
    n, c, h, w = pred.shape
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"Frames of {h}x{w} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")

    window = gaussian_window()[None, None].to(pred)
    x, y = pred.reshape(n * c, 1, h, w), target.reshape(n * c, 1, h, w)

    mu_x, mu_y = F.conv2d(x, window), F.conv2d(y, window)
    sigma_xx = F.conv2d(x * x, window) - mu_x * mu_x
    sigma_yy = F.conv2d(y * y, window) - mu_y * mu_y
    sigma_xy = F.conv2d(x * y, window) - mu_x * mu_y

    c1, c2 = SSIM_K1**2, SSIM_K2**2
    numerator = (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_xx + sigma_yy + c2)
    return (numerator / denominator).reshape(n, c, h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1)


def per_frame_metrics(pred: torch.Tensor, target: torch.Tensor) -> dict[str, torch.Tensor]:
    """Every metric for every frame; each value has the leading (...) shape of the inputs.

    Raises:
        ValueError: On shape mismatch or pixels outside [0, 1].
    """
    _check_pair(pred, target)
    lead = pred.shape[:-3]
    c, h, w = pred.shape[-3:]
    x = pred.detach().to(torch.float64).reshape(-1, c, h, w)
    y = target.detach().to(torch.float64).reshape(-1, c, h, w)
    pixels = c * h * w

    diff = x - y
    sq = diff.pow(2).flatten(1).sum(1)
    ab = diff.abs().flatten(1).sum(1)
    mse_pixel = sq / pixels
    psnr = 10 * torch.log10(1.0 / mse_pixel)

    p = x.clamp(BCE_EPS, 1 - BCE_EPS)
    bce = -(y * torch.log(p) + (1 - y) * torch.log1p(-p)).flatten(1).sum(1)
    ssim = ssim_map(x, y).flatten(1).mean(1)

    values = {"mse": sq, "mae": ab, "ssim": ssim, "psnr": psnr, "bce": bce, "mse_pixel": mse_pixel, "mae_pixel": ab / pixels}
    return {name: value.reshape(lead) for name, value in values.items()}


def frame_metrics(pred: torch.Tensor, target: torch.Tensor) -> dict[str, float]:
    """Metrics averaged over all frames (and sequences) of `pred`."""
    return {name: value.mean().item() for name, value in per_frame_metrics(pred, target).items()}


def ssim(pred: torch.Tensor, target: torch.Tensor) -> float:
    return frame_metrics(pred, target)["ssim"]


def psnr(pred: torch.Tensor, target: torch.Tensor) -> float:
    return frame_metrics(pred, target)["psnr"]


class MetricAccumulator:
    """
    Per-sequence, per-frame metric store for (B, T, C, H, W) batches.

    Shards built from disjoint parts of a test set merge by concatenation; every mean is
    an exactly rounded sum (`math.fsum`), so results do not depend on sharding or order.
    """

    def __init__(self, length: int):
        self.length = length
        self._values: dict[str, list[np.ndarray]] = {name: [] for name in METRICS}

    @property
    def count(self) -> int:
        return sum(len(block) for block in self._values["mse"])

    def add(self, pred: torch.Tensor, target: torch.Tensor):
        if pred.ndim != 5 or pred.shape[1] != self.length:
            raise ValueError(f"Expected (B, {self.length}, C, H, W) frames, got {tuple(pred.shape)}")
        for name, value in per_frame_metrics(pred, target).items():
            self._values[name].append(value.cpu().numpy())

    def merge(self, other: Self) -> Self:
        if other.length != self.length:
            raise ValueError(f"Cannot merge accumulators of length {self.length} and {other.length}")
        merged = type(self)(self.length)
        for name in METRICS:
            merged._values[name] = [*self._values[name], *other._values[name]]
        return merged

    def _stacked(self, name: str, frames: int) -> np.ndarray:
        if not self._values[name]:
            raise ValueError("No sequences accumulated")
        return np.concatenate(self._values[name])[:, :frames]

    def curves(self, frames: int | None = None) -> dict[str, list[float]]:
        """Per-frame means over sequences for the first `frames` frames."""
        frames = self.length if frames is None else frames
        out = {}
        for name in METRICS:
            stacked = self._stacked(name, frames)
            out[name] = [math.fsum(stacked[:, t]) / len(stacked) for t in range(frames)]
        return out

    def aggregate(self, frames: int | None = None) -> dict[str, float]:
        """Means over sequences and the first `frames` frames, plus `mse_sequence`: the per-sequence sum over frames."""
        frames = self.length if frames is None else frames
        out = {}
        for name in METRICS:
            stacked = self._stacked(name, frames)
            out[name] = math.fsum(stacked.ravel()) / stacked.size
        mse = self._stacked("mse", frames)
        out["mse_sequence"] = math.fsum(mse.ravel()) / len(mse)
        return out
