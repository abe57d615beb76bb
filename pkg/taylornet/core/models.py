from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np
import torch


@dataclass(slots=True)
class VideoBatch:
    """A batch of frame sequences.

    Attributes:
        frames (torch.Tensor): Array of shape (batch, time, channel, height, width) with values in [0, 1].
        seed (int | None): Seed the batch was generated from, if any.
        metadata (dict[str, Any]): Provenance (generator name, preset, source file, ...).
    """

    frames: torch.Tensor
    seed: int | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.frames.ndim != 5:
            raise ValueError(f"VideoBatch frames must be 5-D (B, T, C, H, W), got shape {tuple(self.frames.shape)}")
        if self.frames.numel() and (self.frames.min() < 0 or self.frames.max() > 1):
            raise ValueError("VideoBatch frames must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        b, t, c, h, w = self.frames.shape
        return b, t, c, h, w

    def __len__(self) -> int:
        return self.frames.shape[0]

    def split(self, input_length: int) -> tuple[torch.Tensor, torch.Tensor]:
        """Split along time into (conditioning frames, future frames)."""
        if not 1 <= input_length <= self.frames.shape[1]:
            raise ValueError(f"input_length {input_length} outside [1, {self.frames.shape[1]}]")
        return self.frames[:, :input_length], self.frames[:, input_length:]

    def slice(self, start: int, stop: int) -> "VideoBatch":
        return VideoBatch(self.frames[start:stop], seed=self.seed, metadata=dict(self.metadata))


@dataclass(slots=True, frozen=True)
class BouncingObject:
    """One sprite moving with constant velocity.

    Attributes:
        sprite (np.ndarray): (h, w) intensities in [0, 1].
        position (tuple[float, float]): Top-left corner as (x, y) = (column, row), in pixels.
        velocity (tuple[float, float]): Pixels per frame along (x, y).
    """

    sprite: np.ndarray
    position: tuple[float, float]
    velocity: tuple[float, float]


@dataclass(slots=True, frozen=True)
class BounceSpec:
    """Fully determined bouncing-sprite sequence.

    Attributes:
        canvas (tuple[int, int]): Canvas (height, width).
        objects (tuple[BouncingObject, ...]): Moving sprites.
        length (int): Number of frames.
    """

    canvas: tuple[int, int]
    objects: tuple[BouncingObject, ...]
    length: int


class LossTerms(NamedTuple):
    """Decomposed training loss: total = image + lambda * moment."""

    total: torch.Tensor
    image: torch.Tensor
    moment: torch.Tensor


class CheckResult(NamedTuple):
    """Outcome of one numerical verification."""

    name: str
    value: float
    tolerance: float
    passed: bool

    def describe(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3e} (tolerance {self.tolerance:.1e})"


