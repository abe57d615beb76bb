from dataclasses import dataclass
from typing import NamedTuple, Self

import torch
from torch import nn

from .exceptions import SequenceStateError


@dataclass(slots=True, frozen=True)
class ConvLstmState:
    """Per-layer hidden and cell maps of the residual ConvLSTM."""

    hidden: tuple[torch.Tensor, ...]
    cell: tuple[torch.Tensor, ...]

    def to_dict(self) -> dict[str, list[torch.Tensor]]:
        return {"hidden": [h.detach().clone() for h in self.hidden], "cell": [c.detach().clone() for c in self.cell]}

    @classmethod
    def from_dict(cls, data: dict[str, list[torch.Tensor]]) -> Self:
        hidden, cell = tuple(data["hidden"]), tuple(data["cell"])
        if len(hidden) != len(cell) or any(h.shape != c.shape for h, c in zip(hidden, cell, strict=True)):
            raise ValueError("Hidden and cell maps must pair up with matching shapes")
        return cls(hidden, cell)


class LstmGates(NamedTuple):
    input: torch.Tensor
    forget: torch.Tensor
    output: torch.Tensor
    candidate: torch.Tensor


class ConvLstmCell(nn.Module):
    """Vanilla convolutional LSTM cell; forget-gate bias starts at 1."""

    def __init__(self, in_channels: int, hidden_channels: int, kernel_size: int = 3):
        super().__init__()
        self.hidden_channels = hidden_channels
        self.conv = nn.Conv2d(in_channels + hidden_channels, 4 * hidden_channels, kernel_size, padding=kernel_size // 2)
        with torch.no_grad():
            assert self.conv.bias is not None
            self.conv.bias.zero_()
            self.conv.bias[hidden_channels : 2 * hidden_channels].fill_(1.0)

    def gates(self, x: torch.Tensor, h: torch.Tensor) -> LstmGates:
        cc_i, cc_f, cc_o, cc_g = torch.split(self.conv(torch.cat([x, h], dim=1)), self.hidden_channels, dim=1)
        return LstmGates(torch.sigmoid(cc_i), torch.sigmoid(cc_f), torch.sigmoid(cc_o), torch.tanh(cc_g))

    def forward(self, x: torch.Tensor, h: torch.Tensor, c: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        gates = self.gates(x, h)
        c_next = gates.forget * c + gates.input * gates.candidate
        h_next = gates.output * torch.tanh(c_next)
        return h_next, c_next


class ResidualBranch(nn.Module):
    """
    Stacked ConvLSTM predicting the residual feature; the top layer's hidden map is the prediction.

    Args:
        channels (int): Residual feature channels (also the hidden width of every layer).
        num_layers (int): Stack depth.
        kernel_size (int): Gate convolution size.
    """

    def __init__(self, channels: int, *, num_layers: int = 3, kernel_size: int = 3):
        super().__init__()
        self.channels = channels
        self.layers = nn.ModuleList(ConvLstmCell(channels, channels, kernel_size) for _ in range(num_layers))

    def initial_state(self, like: torch.Tensor) -> ConvLstmState:
        zeros = tuple(torch.zeros_like(like) for _ in self.layers)
        return ConvLstmState(zeros, tuple(torch.zeros_like(like) for _ in self.layers))

    def forward(self, state: ConvLstmState | None, h_input: torch.Tensor) -> tuple[ConvLstmState, torch.Tensor]:
        if state is None:
            raise SequenceStateError("ConvLSTM state is not initialized; call initial_state() first")
        if h_input.ndim != 4 or h_input.shape[1] != self.channels:
            raise ValueError(f"Expected (B, {self.channels}, H, W) residual feature, got {tuple(h_input.shape)}")
        if len(state.hidden) != len(self.layers) or state.hidden[0].shape != h_input.shape:
            raise ValueError("ConvLSTM state does not match the input shape or layer count")

        hidden, cell = [], []
        x = h_input
        for layer, h, c in zip(self.layers, state.hidden, state.cell, strict=True):
            x, c_next = layer(x, h, c)
            hidden.append(x)
            cell.append(c_next)
        return ConvLstmState(tuple(hidden), tuple(cell)), x
