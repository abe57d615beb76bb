import math
from dataclasses import dataclass
from typing import NamedTuple

import torch
from torch import nn

from .exceptions import SequenceStateError
from .pde_model import PdeModel


@dataclass(slots=True, frozen=True)
class TaylorCellState:
    """Sequence-local state of a TaylorCell.

    Attributes:
        derivatives (tuple[torch.Tensor, ...]): Temporal derivatives of the first Taylor feature, cached once per sequence.
        mcu_hidden (torch.Tensor | None): Memory e_t of the correction unit.
        step (int): Index of the last predicted frame; 0 before the first invocation.
    """

    derivatives: tuple[torch.Tensor, ...] = ()
    mcu_hidden: torch.Tensor | None = None
    step: int = 0


class McuOutput(NamedTuple):
    """Memory update e_t and the gates that produced it."""

    hidden: torch.Tensor
    update: torch.Tensor
    reset: torch.Tensor
    candidate: torch.Tensor


class CellOutput(NamedTuple):
    """One TaylorCell step: corrected prediction plus internal probes."""

    prediction: torch.Tensor
    inferred: torch.Tensor
    memory: torch.Tensor
    gain: torch.Tensor


def taylor_terms(state: TaylorCellState) -> list[torch.Tensor]:
    """Individual expansion terms t^n / n! * h0^(n) at t = state.step."""
    if not state.derivatives:
        raise SequenceStateError("Taylor derivatives are not initialized; run a cell step first")

    t = float(state.step)
    return [t**n / math.factorial(n) * derivative for n, derivative in enumerate(state.derivatives)]


def tpu_predict(state: TaylorCellState) -> torch.Tensor:
    """Taylor inferred feature: the truncated expansion of the first frame evaluated at t = state.step."""
    terms = taylor_terms(state)
    out = terms[0]
    for term in terms[1:]:
        out = out + term
    return out


class TaylorCell(nn.Module):
    """
    Recurrent Taylor prediction unit with gated memory correction.

    Each step extrapolates from the first frame's cached derivatives and blends the
    result with a gated memory over all past Taylor features:

        e_t = z * g + (1 - z) * h_{t-1}
        g   = tanh(W_g * (r * e_{t-1}, h_{t-1}))
        h^_t = (1 - K_t) * h~_t + K_t * e_t

    Args:
        channels (int): Taylor feature channels.
        order (int): Number of retained Taylor terms.
        kernel_size (int): Side of the derivative filters.
        gate_kernel (int): Side of the gate convolutions.
        mcu_enabled (bool): If False, the previous Taylor feature replaces e_t in the correction.
    """

    def __init__(
        self,
        channels: int,
        *,
        order: int = 3,
        kernel_size: int = 7,
        gate_kernel: int = 3,
        mcu_enabled: bool = True,
    ):
        super().__init__()
        if order < 1:
            raise ValueError(f"Taylor order must be >= 1, got {order}")

        self.channels = channels
        self.order = order
        self.mcu_enabled = mcu_enabled
        padding = gate_kernel // 2

        self.pde = PdeModel(channels, kernel_size)
        self.update_gate = nn.Conv2d(2 * channels, channels, gate_kernel, padding=padding)
        self.reset_gate = nn.Conv2d(2 * channels, channels, gate_kernel, padding=padding)
        self.candidate = nn.Conv2d(2 * channels, channels, gate_kernel, padding=padding)
        self.gain = nn.Conv2d(2 * channels, channels, kernel_size=1)

    def initial_state(self) -> TaylorCellState:
        return TaylorCellState()

    def mcu_update(self, e_prev: torch.Tensor, h_prev: torch.Tensor) -> McuOutput:
        if e_prev.shape != h_prev.shape:
            raise ValueError(f"Memory {tuple(e_prev.shape)} and input {tuple(h_prev.shape)} shapes differ")

        stacked = torch.cat([e_prev, h_prev], dim=1)
        update = torch.sigmoid(self.update_gate(stacked))
        reset = torch.sigmoid(self.reset_gate(stacked))
        candidate = torch.tanh(self.candidate(torch.cat([reset * e_prev, h_prev], dim=1)))
        hidden = update * candidate + (1 - update) * h_prev
        return McuOutput(hidden, update, reset, candidate)

    def correct(self, h_tilde: torch.Tensor, e_t: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if h_tilde.shape != e_t.shape:
            raise ValueError(f"Inferred {tuple(h_tilde.shape)} and memory {tuple(e_t.shape)} shapes differ")

        gain = torch.sigmoid(self.gain(torch.cat([h_tilde, e_t], dim=1)))
        return (1 - gain) * h_tilde + gain * e_t, gain

    def forward(self, state: TaylorCellState, h_input: torch.Tensor) -> tuple[TaylorCellState, CellOutput]:
        if h_input.ndim != 4 or h_input.shape[1] != self.channels:
            raise ValueError(f"Expected (B, {self.channels}, H, W) Taylor feature, got {tuple(h_input.shape)}")

        if state.step == 0:
            derivatives = tuple(self.pde.taylor_derivatives(h_input, self.order))
            e_prev = h_input
        else:
            if state.mcu_hidden is None or state.derivatives[0].shape != h_input.shape:
                raise SequenceStateError(
                    "Input does not belong to the cached sequence; start a new sequence with initial_state()"
                )
            derivatives = state.derivatives
            e_prev = state.mcu_hidden

        memory = self.mcu_update(e_prev, h_input).hidden if self.mcu_enabled else h_input
        new_state = TaylorCellState(derivatives, memory, state.step + 1)
        inferred = tpu_predict(new_state)
        prediction, gain = self.correct(inferred, memory)
        return new_state, CellOutput(prediction, inferred, memory, gain)


def taylor_cell_step(
    params: TaylorCell, state: TaylorCellState, h_input: torch.Tensor
) -> tuple[TaylorCellState, torch.Tensor]:
    """One cell invocation returning only the corrected Taylor feature."""
    new_state, output = params(state, h_input)
    return new_state, output.prediction
