"""
Synthetic sequence generators.

Positions and velocities of bouncing sprites use (x, y) = (column, row) pixel coordinates.
Every generator is a pure function of its arguments and seed.
"""

import math
from collections.abc import Sequence

import numpy as np
import torch
from torch.utils.data import Dataset

from ..core.config import DataPreset
from ..core.models import BounceSpec, BouncingObject, VideoBatch


def reflect_step(position: float, velocity: float, max_position: float) -> tuple[float, float]:
    """Advance one frame along one axis with elastic reflection at 0 and `max_position`.

    Returns:
        tuple[float, float]: The next (position, velocity).
    """
    nxt = position + velocity
    if nxt > max_position:
        nxt = 2 * max_position - nxt
        velocity = -velocity
    elif nxt < 0:
        nxt = -nxt
        velocity = -velocity
    return min(max(nxt, 0.0), max_position), velocity


def object_trajectory(obj: BouncingObject, canvas: tuple[int, int], length: int) -> list[tuple[float, float]]:
    """Top-left (x, y) position of `obj` at every frame."""
    height, width = canvas
    sprite_h, sprite_w = obj.sprite.shape
    max_x, max_y = float(width - sprite_w), float(height - sprite_h)

    (x, y), (vx, vy) = obj.position, obj.velocity
    x, y = min(max(x, 0.0), max_x), min(max(y, 0.0), max_y)
    positions = []
    for _ in range(length):
        positions.append((x, y))
        x, vx = reflect_step(x, vx, max_x)
        y, vy = reflect_step(y, vy, max_y)
    return positions


def render_bouncing(spec: BounceSpec) -> np.ndarray:
    """Render a (T, H, W) float32 sequence; overlapping sprites compose by per-pixel maximum."""
    height, width = spec.canvas
    if spec.length < 1:
        raise ValueError(f"Sequence length must be >= 1, got {spec.length}")
    for obj in spec.objects:
        sprite_h, sprite_w = obj.sprite.shape
        if sprite_h > height or sprite_w > width:
            raise ValueError(f"Sprite {sprite_h}x{sprite_w} does not fit in a {height}x{width} canvas")

    frames = np.zeros((spec.length, height, width), dtype=np.float32)
    for obj in spec.objects:
        sprite = np.clip(obj.sprite, 0.0, 1.0).astype(np.float32)
        sprite_h, sprite_w = sprite.shape
        for t, (x, y) in enumerate(object_trajectory(obj, spec.canvas, spec.length)):
            col, row = int(x), int(y)
            region = frames[t, row : row + sprite_h, col : col + sprite_w]
            np.maximum(region, sprite, out=region)
    return frames


def generate_bouncing(spec: BounceSpec, seed: int | None = None) -> VideoBatch:
    """Render one bouncing-sprite sequence as a (1, T, 1, H, W) batch.

    Raises:
        ValueError: If a sprite is larger than the canvas.
    """
    frames = torch.from_numpy(render_bouncing(spec))[None, :, None]
    return VideoBatch(frames, seed=seed, metadata={"generator": "bouncing", "objects": len(spec.objects)})


def sample_bounce_spec(
    rng: np.random.Generator,
    sprites: np.ndarray,
    *,
    canvas: int,
    num_digits: int,
    length: int,
    max_speed: float,
) -> BounceSpec:
    """Draw sprites, uniform start positions and uniform velocities in [-max_speed, max_speed]."""
    sprite_h, sprite_w = sprites.shape[1:]
    if sprite_h > canvas or sprite_w > canvas:
        raise ValueError(f"Sprite {sprite_h}x{sprite_w} does not fit in a {canvas}x{canvas} canvas")

    objects = []
    for _ in range(num_digits):
        sprite = sprites[rng.integers(len(sprites))]
        position = (float(rng.uniform(0, canvas - sprite_w)), float(rng.uniform(0, canvas - sprite_h)))
        velocity = (float(rng.uniform(-max_speed, max_speed)), float(rng.uniform(-max_speed, max_speed)))
        objects.append(BouncingObject(sprite, position, velocity))
    return BounceSpec((canvas, canvas), tuple(objects), length)


def sequence_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, *keys])


def generate_moving_digits(
    sprites: np.ndarray,
    preset: DataPreset,
    *,
    batch_size: int,
    length: int,
    seed: int,
    start_index: int = 0,
) -> VideoBatch:
    """Generate `batch_size` bouncing-digit sequences; sequence n uses the generator seeded by (seed, n)."""
    frames = np.stack(
        [
            render_bouncing(
                sample_bounce_spec(
                    sequence_rng(seed, start_index + n),
                    sprites,
                    canvas=preset.canvas,
                    num_digits=preset.num_digits,
                    length=length,
                    max_speed=preset.max_speed,
                )
            )
            for n in range(batch_size)
        ]
    )
    return VideoBatch(
        torch.from_numpy(frames)[:, :, None],
        seed=seed,
        metadata={"generator": "moving_digits", "preset": preset.name, "start_index": start_index},
    )


def generate_translating_bump(
    canvas: int | tuple[int, int],
    velocity: tuple[float, float],
    length: int,
    *,
    center: tuple[float, float] | None = None,
    sigma: float = 2.0,
    dtype: torch.dtype = torch.float64,
) -> VideoBatch:
    """
    Gaussian bump moving with constant velocity, evaluated analytically at every pixel.

    Frame t holds exp(-|p - c_t|^2 / (2 sigma^2)) with c_t = center + t * velocity,
    centers given as (x, y) = (column, row).

    Args:
        canvas (int | tuple[int, int]): Square side or (height, width).
        velocity (tuple[float, float]): Pixels per frame along (x, y).
        length (int): Number of frames.
        center (tuple[float, float] | None): Center at frame 0; defaults to a path centered on the canvas.
        sigma (float): Bump width in pixels.
        dtype (torch.dtype): Output dtype.

    Raises:
        ValueError: If the bump comes closer than 3 sigma to the border at any frame.
    """
    height, width = (canvas, canvas) if isinstance(canvas, int) else canvas
    if length < 1:
        raise ValueError(f"Sequence length must be >= 1, got {length}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")

    vx, vy = velocity
    if center is None:
        center = ((width - 1) / 2 - vx * (length - 1) / 2, (height - 1) / 2 - vy * (length - 1) / 2)
    cx0, cy0 = center

    margin = 3 * sigma
    for t in (0, length - 1):
        cx, cy = cx0 + t * vx, cy0 + t * vy
        if not (margin <= cx <= width - 1 - margin and margin <= cy <= height - 1 - margin):
            raise ValueError(f"Bump centered at ({cx:.2f}, {cy:.2f}) leaves the {height}x{width} canvas at frame {t}")

    rows = torch.arange(height, dtype=torch.float64)[:, None]
    cols = torch.arange(width, dtype=torch.float64)[None, :]
    frames = torch.stack(
        [
            torch.exp(-((cols - (cx0 + t * vx)) ** 2 + (rows - (cy0 + t * vy)) ** 2) / (2 * sigma * sigma))
            for t in range(length)
        ]
    )
    return VideoBatch(
        frames[None, :, None].to(dtype),
        metadata={"generator": "translating_bump", "velocity": [vx, vy], "sigma": sigma},
    )


class MovingDigitsDataset(Dataset[torch.Tensor]):
    """
    On-the-fly bouncing-digits sequences.

    Item `n` is rendered from the generator seeded by (seed, epoch, n), so the data is
    identical across runs and across DataLoader worker layouts.

    Args:
        sprites (np.ndarray): (N, s, s) sprite set in [0, 1].
        preset (DataPreset): Canvas and motion parameters.
        length (int): Frames per sequence.
        size (int): Number of sequences.
        seed (int): Base seed.
        epoch (int): Epoch key; presets with `fixed_data` always use epoch 0.
    """

    def __init__(
        self, sprites: np.ndarray, preset: DataPreset, *, length: int, size: int, seed: int, epoch: int = 0
    ):
        if size < 1:
            raise ValueError(f"Dataset size must be >= 1, got {size}")
        self.sprites = sprites
        self.preset = preset
        self.length = length
        self.size = size
        self.seed = seed
        self.epoch = 0 if preset.fixed_data else epoch

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, index: int) -> torch.Tensor:
        if not 0 <= index < self.size:
            raise IndexError(index)
        spec = sample_bounce_spec(
            sequence_rng(self.seed, self.epoch, index),
            self.sprites,
            canvas=self.preset.canvas,
            num_digits=self.preset.num_digits,
            length=self.length,
            max_speed=self.preset.max_speed,
        )
        return torch.from_numpy(render_bouncing(spec))[:, None]


def pixel_mass(frames: torch.Tensor | Sequence[torch.Tensor]) -> list[float]:
    """Sum of pixel values per frame of a (T, ...) sequence."""
    return [math.fsum(frame.flatten().tolist()) for frame in frames]
