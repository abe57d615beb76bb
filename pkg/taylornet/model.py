from dataclasses import dataclass, field
from typing import NamedTuple

import torch
from torch import nn

from .core.config import ModelConfig
from .residual_branch import ConvLstmState, ResidualBranch
from .taylor_cell import TaylorCell, taylor_terms


def _groups(channels: int) -> int:
    return next(g for g in (8, 4, 2, 1) if channels % g == 0)


def _down(in_channels: int, out_channels: int, kernel_size: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size, stride=stride, padding=1),
        nn.GroupNorm(_groups(out_channels), out_channels),
        nn.LeakyReLU(0.2, inplace=True),
    )


def _up(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose2d(in_channels, out_channels, kernel_size=4, stride=2, padding=1),
        nn.GroupNorm(_groups(out_channels), out_channels),
        nn.LeakyReLU(0.2, inplace=True),
    )


@dataclass(slots=True)
class SequenceProbe:
    """Per-step branch features recorded during a rollout (warm-up steps included).

    Attributes:
        taylor (list[torch.Tensor]): Corrected Taylor features, one per step.
        residual (list[torch.Tensor]): Residual features, one per step.
        inferred (list[torch.Tensor]): Taylor-expansion extrapolations before correction.
        terms (list[list[torch.Tensor]]): Individual expansion terms per step (only when requested).
    """

    taylor: list[torch.Tensor] = field(default_factory=list)
    residual: list[torch.Tensor] = field(default_factory=list)
    inferred: list[torch.Tensor] = field(default_factory=list)
    terms: list[list[torch.Tensor]] = field(default_factory=list)


class Rollout(NamedTuple):
    """Rollout result: future frames, decoded warm-up predictions and probes (when recorded)."""

    frames: torch.Tensor
    warmup: torch.Tensor | None
    probe: SequenceProbe | None


class TaylorNet(nn.Module):
    """
    Two-branch sequence-to-sequence video predictor.

    A frame is encoded to a latent map u, split into a Taylor feature (E_T) and a residual
    feature (E_R); a TaylorCell and a residual ConvLSTM predict the next features, which are
    remapped to the latent space (D_T, D_R), summed and decoded to a frame in [0, 1].

    Args:
        config (ModelConfig): Model shape and ablation flags.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c, latent, width = config.frame_channels, config.latent_channels, config.encoder_width

        self.encoder = nn.Sequential(_down(c, width, 3, 1), _down(width, width, 4, 2), _down(width, latent, 4, 2))
        self.split_taylor = nn.Conv2d(latent, latent, 3, padding=1)
        self.split_residual = nn.Conv2d(latent, latent, 3, padding=1)
        self.taylor_cell = TaylorCell(
            latent, order=config.order, kernel_size=config.kernel_size, mcu_enabled=config.mcu_enabled
        )
        self.residual_branch = ResidualBranch(latent, num_layers=config.residual_layers)
        self.remap_taylor = nn.Conv2d(latent, latent, 3, padding=1, bias=False)
        self.remap_residual = nn.Conv2d(latent, latent, 3, padding=1, bias=False)
        self.decoder = nn.Sequential(_up(latent, width), _up(width, width), nn.Conv2d(width, c, 3, padding=1))

    @property
    def pde(self):
        return self.taylor_cell.pde

    def _check_frames(self, frames: torch.Tensor, name: str):
        expected = self.config.frame_shape
        if frames.ndim < 4 or tuple(frames.shape[-3:]) != expected:
            raise ValueError(f"{name} must have trailing shape {expected}, got {tuple(frames.shape)}")
        if frames.numel() and (frames.min() < 0 or frames.max() > 1):
            raise ValueError(f"{name} pixel values must lie in [0, 1]")

    def encode_split(self, frame: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Encode (B, C, H, W) frames to (u, h_T, h_R)."""
        self._check_frames(frame, "frame")
        u = self.encoder(frame)
        return u, self.split_taylor(u), self.split_residual(u)

    def merge_decode(self, h_hat_taylor: torch.Tensor | None, h_hat_residual: torch.Tensor | None) -> torch.Tensor:
        """Remap both branch predictions to the latent space, sum them and decode to frames in [0, 1]."""
        if h_hat_taylor is None and h_hat_residual is None:
            raise ValueError("At least one branch prediction is required")
        if h_hat_taylor is not None and h_hat_residual is not None and h_hat_taylor.shape != h_hat_residual.shape:
            raise ValueError(
                f"Branch shapes differ: {tuple(h_hat_taylor.shape)} vs {tuple(h_hat_residual.shape)}"
            )

        u_hat = None
        if h_hat_taylor is not None:
            u_hat = self.remap_taylor(h_hat_taylor)
        if h_hat_residual is not None:
            residual = self.remap_residual(h_hat_residual)
            u_hat = residual if u_hat is None else u_hat + residual
        assert u_hat is not None
        return self.decode(u_hat)

    def decode(self, u_hat: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.decoder(u_hat))

    def rollout(
        self,
        input_frames: torch.Tensor,
        n_future: int,
        teacher_frames: torch.Tensor | None = None,
        *,
        record: bool = False,
        record_terms: bool = False,
    ) -> Rollout:
        """Run both branches over the conditioning frames, then predict `n_future` frames.

        Args:
            input_frames (torch.Tensor): (B, t, C, H, W) conditioning frames, t >= 1.
            n_future (int): Frames to predict.
            teacher_frames (torch.Tensor | None): (B, n_future, C, H, W) ground truth; when given,
                prediction steps consume real frames (teaching mode) instead of the model's own outputs.
            record (bool): Keep per-step branch probes and decode the warm-up predictions.
            record_terms (bool): Also keep each Taylor expansion term per step.

        Returns:
            Rollout: `frames` has shape (B, n_future, C, H, W).
        """
        if input_frames.ndim != 5 or input_frames.shape[1] == 0:
            raise ValueError(f"input_frames must be a non-empty (B, t, C, H, W) array, got {tuple(input_frames.shape)}")
        if n_future < 0:
            raise ValueError(f"n_future must be >= 0, got {n_future}")
        self._check_frames(input_frames, "input_frames")
        if teacher_frames is not None:
            if teacher_frames.ndim != 5 or teacher_frames.shape[1] != n_future:
                raise ValueError(
                    f"teacher_frames must hold {n_future} frames, got shape {tuple(teacher_frames.shape)}"
                )
            self._check_frames(teacher_frames, "teacher_frames")

        config = self.config
        t = input_frames.shape[1]
        probe = SequenceProbe() if record or record_terms else None
        taylor_state = self.taylor_cell.initial_state()
        residual_state: ConvLstmState | None = None
        h_hat_taylor: torch.Tensor | None = None
        h_hat_residual: torch.Tensor | None = None
        warmup: list[torch.Tensor] = []
        future: list[torch.Tensor] = []

        for s in range(t - 1 + n_future):
            if s < t:
                _, h_taylor, h_residual = self.encode_split(input_frames[:, s])
            elif teacher_frames is not None:
                _, h_taylor, h_residual = self.encode_split(teacher_frames[:, s - t])
            else:
                h_taylor, h_residual = h_hat_taylor, h_hat_residual

            if config.taylor_branch_enabled:
                assert h_taylor is not None
                taylor_state, cell_output = self.taylor_cell(taylor_state, h_taylor)
                h_hat_taylor = cell_output.prediction
                if probe is not None:
                    probe.taylor.append(cell_output.prediction)
                    probe.inferred.append(cell_output.inferred)
                    if record_terms:
                        probe.terms.append(taylor_terms(taylor_state))

            if config.residual_branch_enabled:
                assert h_residual is not None
                if residual_state is None:
                    residual_state = self.residual_branch.initial_state(h_residual)
                residual_state, h_hat_residual = self.residual_branch(residual_state, h_residual)
                if probe is not None:
                    probe.residual.append(h_hat_residual)

            if s >= t - 1:
                future.append(self.merge_decode(h_hat_taylor, h_hat_residual))
            elif record:
                warmup.append(self.merge_decode(h_hat_taylor, h_hat_residual))

        b, _, c, h, w = input_frames.shape
        frames = torch.stack(future, dim=1) if future else input_frames.new_zeros(b, 0, c, h, w)
        warmup_frames = torch.stack(warmup, dim=1) if warmup else None
        return Rollout(frames, warmup_frames if record else None, probe)

    def forward(
        self,
        input_frames: torch.Tensor,
        n_future: int | None = None,
        teacher_frames: torch.Tensor | None = None,
    ) -> torch.Tensor:
        n = self.config.output_length if n_future is None else n_future
        return self.rollout(input_frames, n, teacher_frames).frames
