import hashlib
import json
import tomllib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Final, Literal, Self, TypedDict, Unpack

from taylornet.exceptions import ConfigError

Ablation = Literal["full", "no_mcu", "taylorcell_only", "residual_only"]
TeacherSchedule = Literal["constant", "linear"]
TeacherGranularity = Literal["batch", "epoch"]

ABLATION_FLAGS: Final[dict[str, dict[str, bool]]] = {
    "full": {},
    "no_mcu": {"mcu_enabled": False},
    "taylorcell_only": {"residual_branch_enabled": False},
    "residual_only": {"taylor_branch_enabled": False},
}


@dataclass(slots=True, frozen=True)
class DataPreset:
    """Geometry and volume of the synthetic bouncing-digits data.

    Attributes:
        name (str): Preset name.
        canvas (int): Square canvas side in pixels.
        sprite_size (int): Square digit sprite side in pixels.
        num_digits (int): Digits per sequence.
        max_speed (float): Velocity components are drawn from [-max_speed, max_speed].
        sequences_per_epoch (int): Generated sequences per training epoch.
        epochs (int): Default number of epochs.
        batch_size (int): Default batch size.
        fixed_data (bool): Reuse the same sequences every epoch.
        checkpoint_every (int): Default period of intermediate checkpoints in epochs; 0 writes only the final one.
        teacher_prob (float): Default probability of teaching mode.
    """

    name: str
    canvas: int
    sprite_size: int
    num_digits: int
    max_speed: float
    sequences_per_epoch: int
    epochs: int
    batch_size: int
    fixed_data: bool = False
    checkpoint_every: int = 5
    teacher_prob: float = 0.5


PRESETS: Final[dict[str, DataPreset]] = {
    "tiny": DataPreset("tiny", canvas=32, sprite_size=14, num_digits=2, max_speed=4.0,
                       sequences_per_epoch=2_000, epochs=30, batch_size=8),
    "mmnist": DataPreset("mmnist", canvas=64, sprite_size=28, num_digits=2, max_speed=4.0,
                         sequences_per_epoch=10_000, epochs=1000, batch_size=16, checkpoint_every=50),
    "overfit": DataPreset("overfit", canvas=32, sprite_size=14, num_digits=2, max_speed=4.0,
                          sequences_per_epoch=4, epochs=500, batch_size=4, fixed_data=True,
                          checkpoint_every=0, teacher_prob=1.0),
}


def get_preset(name: str) -> DataPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"Unknown preset '{name}', expected one of: {', '.join(PRESETS)}") from None


@dataclass(slots=True, frozen=True)
class ModelConfig:
    """Shape and structure of a TaylorNet model.

    Attributes:
        frame_channels (int): Channels per frame.
        frame_height (int): Frame height, divisible by 4.
        frame_width (int): Frame width, divisible by 4.
        latent_channels (int): Channels of the latent space and both branches.
        encoder_width (int): Channels inside the frame encoder/decoder.
        order (int): Taylor expansion order (number of retained terms).
        kernel_size (int): Side of the derivative filters.
        residual_layers (int): Depth of the residual ConvLSTM.
        mcu_enabled (bool): Correct with gated memory; otherwise with the previous Taylor feature.
        residual_branch_enabled (bool): Add the residual branch to the latent sum.
        taylor_branch_enabled (bool): Add the Taylor branch to the latent sum.
        input_length (int): Conditioning frames.
        output_length (int): Predicted frames during training.
    """

    frame_channels: int = 1
    frame_height: int = 32
    frame_width: int = 32
    latent_channels: int = 32
    encoder_width: int = 32
    order: int = 3
    kernel_size: int = 7
    residual_layers: int = 3
    mcu_enabled: bool = True
    residual_branch_enabled: bool = True
    taylor_branch_enabled: bool = True
    input_length: int = 10
    output_length: int = 10

    def __post_init__(self):
        if self.order < 1:
            raise ConfigError(f"Taylor order must be >= 1, got {self.order}")
        if self.input_length < 1:
            raise ConfigError(f"input_length must be >= 1, got {self.input_length}")
        if self.output_length < 1:
            raise ConfigError(f"output_length must be >= 1, got {self.output_length}")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd and >= 3, got {self.kernel_size}")
        if self.frame_height % 4 or self.frame_width % 4:
            raise ConfigError("Frame height and width must be divisible by 4")
        if min(self.frame_height, self.frame_width) // 4 < self.kernel_size:
            raise ConfigError(
                f"Latent resolution {self.latent_size} is smaller than the {self.kernel_size}x{self.kernel_size} filters"
            )
        if not (self.taylor_branch_enabled or self.residual_branch_enabled):
            raise ConfigError("At least one branch must be enabled")
        for name in ("frame_channels", "latent_channels", "encoder_width", "residual_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.frame_channels, self.frame_height, self.frame_width

    @property
    def latent_size(self) -> tuple[int, int]:
        return self.frame_height // 4, self.frame_width // 4

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        known = {f.name for f in fields(cls)}
        if unknown := set(data) - known:
            raise ConfigError(f"Unknown model config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


class TrainOverrides(TypedDict, total=False):
    """Keyword overrides accepted by `TrainConfig.for_preset` and `TrainConfig.with_overrides`."""

    lr: float
    epochs: int
    batch_size: int
    moment_weight: float
    teacher_prob: float
    teacher_schedule: TeacherSchedule
    teacher_prob_final: float
    teacher_granularity: TeacherGranularity
    seed: int
    ablation: Ablation
    order: int
    latent_channels: int
    encoder_width: int
    sequences_per_epoch: int
    checkpoint_every: int
    input_length: int
    output_length: int
    num_workers: int
    device: str


@dataclass(slots=True, frozen=True)
class TrainConfig:
    """
    Training run configuration.

    Args:
        preset (str): Data preset name (`tiny`, `mmnist`, `overfit`).
        lr (float): Adam learning rate.
        epochs (int): Number of epochs.
        batch_size (int): Sequences per optimization step.
        moment_weight (float): Weight of the moment loss (lambda).
        teacher_prob (float): Probability of teaching mode (at the start of a linear schedule).
        teacher_schedule (str): `constant` or `linear` decay to `teacher_prob_final`.
        teacher_prob_final (float): Teaching probability reached at the last epoch of a linear schedule.
        teacher_granularity (str): Sample the mode once per `batch` or once per `epoch`.
        seed (int): Seed for parameters, data and mode sampling.
        ablation (str): Model variant (`full`, `no_mcu`, `taylorcell_only`, `residual_only`).
        order (int): Taylor expansion order.
        latent_channels (int): Latent channel width.
        encoder_width (int): Encoder/decoder channel width.
        sequences_per_epoch (int): Generated sequences per epoch; 0 uses the preset value.
        checkpoint_every (int): Write a checkpoint every N epochs; 0 writes only the final one.
        input_length (int): Conditioning frames.
        output_length (int): Predicted frames.
        num_workers (int): DataLoader worker processes for on-the-fly generation.
        device (str): Torch device.
    """

    preset: str = "tiny"
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 8
    moment_weight: float = 1.0
    teacher_prob: float = 0.5
    teacher_schedule: TeacherSchedule = "constant"
    teacher_prob_final: float = 0.0
    teacher_granularity: TeacherGranularity = "batch"
    seed: int = 0
    ablation: Ablation = "full"
    order: int = 3
    latent_channels: int = 32
    encoder_width: int = 32
    sequences_per_epoch: int = 0
    checkpoint_every: int = 5
    input_length: int = 10
    output_length: int = 10
    num_workers: int = 0
    device: str = "cpu"

    def __post_init__(self):
        get_preset(self.preset)
        if not self.lr > 0:
            raise ConfigError(f"Learning rate must be > 0, got {self.lr}")
        if not self.moment_weight >= 0:
            raise ConfigError(f"moment_weight must be >= 0, got {self.moment_weight}")
        for name in ("teacher_prob", "teacher_prob_final"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.teacher_schedule not in ("constant", "linear"):
            raise ConfigError(f"Unknown teacher schedule '{self.teacher_schedule}'")
        if self.teacher_granularity not in ("batch", "epoch"):
            raise ConfigError(f"Unknown teacher granularity '{self.teacher_granularity}'")
        if self.ablation not in ABLATION_FLAGS:
            raise ConfigError(f"Unknown ablation '{self.ablation}', expected one of: {', '.join(ABLATION_FLAGS)}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.sequences_per_epoch < 0 or self.checkpoint_every < 0 or self.num_workers < 0:
            raise ConfigError("sequences_per_epoch, checkpoint_every and num_workers must be >= 0")
        self.model_config()

    @classmethod
    def for_preset(cls, name: str, **overrides: Unpack[TrainOverrides]) -> Self:
        """Build a config from a preset's defaults plus explicit overrides."""
        preset = get_preset(name)
        base: dict[str, Any] = {
            "preset": name,
            "epochs": preset.epochs,
            "batch_size": preset.batch_size,
            "checkpoint_every": preset.checkpoint_every,
            "teacher_prob": preset.teacher_prob,
        }
        return cls(**{**base, **overrides})

    def with_overrides(self, **overrides: Unpack[TrainOverrides]) -> Self:
        return replace(self, **overrides)

    @property
    def data_preset(self) -> DataPreset:
        return get_preset(self.preset)

    @property
    def epoch_size(self) -> int:
        return self.sequences_per_epoch or self.data_preset.sequences_per_epoch

    def teacher_probability(self, epoch: int) -> float:
        """Teaching-mode probability for a zero-based epoch."""
        if self.teacher_schedule == "constant" or self.epochs == 1:
            return self.teacher_prob

        fraction = epoch / (self.epochs - 1)
        return self.teacher_prob + fraction * (self.teacher_prob_final - self.teacher_prob)

    def model_config(self) -> ModelConfig:
        preset = self.data_preset
        return ModelConfig(
            frame_channels=1,
            frame_height=preset.canvas,
            frame_width=preset.canvas,
            latent_channels=self.latent_channels,
            encoder_width=self.encoder_width,
            order=self.order,
            input_length=self.input_length,
            output_length=self.output_length,
            **ABLATION_FLAGS[self.ablation],
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def digest(self) -> str:
        """Stable short hash of the resolved configuration."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def load_config(path: Path, *, preset: str | None = None, **overrides: Unpack[TrainOverrides]) -> TrainConfig:
    """Read a TOML config file (`[train]` table) and apply flag overrides on top.

    Raises:
        ConfigError: If the file is not valid TOML or names unknown keys.
    """
    try:
        document = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Invalid config file {path}: {e}") from e

    table = dict(document.get("train", {}))
    known = {f.name for f in fields(TrainConfig)}
    if unknown := set(table) - known:
        raise ConfigError(f"Unknown keys in {path}: {', '.join(sorted(unknown))}")

    file_preset = table.pop("preset", "tiny")
    merged: dict[str, Any] = {**table, **overrides}
    try:
        return TrainConfig.for_preset(preset or file_preset, **merged)
    except TypeError as e:
        raise ConfigError(f"Invalid config values in {path}: {e}") from e
