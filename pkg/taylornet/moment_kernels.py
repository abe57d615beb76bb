"""
Moment-matrix machinery for convolution filters that approximate spatial partial derivatives.

Coordinates: a k x k filter `w` is indexed as w[row, col] with centered offsets
u = row - (k - 1) / 2 and v = col - (k - 1) / 2. Order (i, j) differentiates i times
along the first spatial axis (rows, "x") and j times along the second (columns, "y").
Convolution means cross-correlation (`torch.nn.functional.conv2d`), so for a smooth field h

    (w * h)(x, y) = sum_{i,j} M(w)[i, j] * d^{i+j} h / dx^i dy^j (x, y) + higher order terms

in index units (grid spacing 1).
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Protocol

import torch
import torch.nn.functional as F


def _check_kernel(weights: torch.Tensor):
    if weights.ndim < 2 or weights.numel() == 0:
        raise ValueError("Filter weights must be a non-empty (..., k, k) array")
    k = weights.shape[-1]
    if weights.shape[-2] != k:
        raise ValueError(f"Filter must be square, got {tuple(weights.shape[-2:])}")
    if k % 2 == 0:
        raise ValueError(f"Filter size must be odd, got {k}")


def _check_order(i: int, j: int, k: int):
    if not (0 <= i <= k - 1 and 0 <= j <= k - 1):
        raise ValueError(f"Derivative order ({i}, {j}) outside [0, {k - 1}] for a {k}x{k} filter")


@dataclass(slots=True, frozen=True)
class SpatialFilter:
    """A k x k convolution filter meant to approximate d^{i+j}/dx^i dy^j.

    Attributes:
        weights (torch.Tensor): (k, k) filter weights, k odd and >= 3.
        target_order (tuple[int, int]): Derivative order (i, j) the filter is trained towards.
    """

    weights: torch.Tensor
    target_order: tuple[int, int]

    def __post_init__(self):
        _check_kernel(self.weights)
        if self.weights.ndim != 2:
            raise ValueError("SpatialFilter weights must be 2-D")
        if self.size < 3:
            raise ValueError(f"Filter size must be >= 3, got {self.size}")
        _check_order(*self.target_order, self.size)

    @property
    def size(self) -> int:
        return self.weights.shape[-1]


@dataclass(slots=True, frozen=True)
class MomentMatrix:
    """Scaled discrete moments M(w)[i, j] of a filter, (k, k)."""

    entries: torch.Tensor


@dataclass(slots=True, frozen=True)
class DeltaTarget:
    """Indicator matrix with a single 1 at `one_position`."""

    entries: torch.Tensor
    one_position: tuple[int, int]


@lru_cache(maxsize=16)
def _moment_basis_f64(k: int) -> torch.Tensor:
    offsets = torch.arange(k, dtype=torch.float64) - (k - 1) / 2
    powers = torch.stack([offsets**i / math.factorial(i) for i in range(k)])
    # offsets**0 is 1 everywhere, including at the zero offset
    return powers


def moment_basis(k: int, *, dtype: torch.dtype = torch.float64, device: torch.device | str | None = None) -> torch.Tensor:
    """(k, k) matrix P with P[i, a] = u_a^i / i!, so that M(w) = P @ w @ P.T."""
    return _moment_basis_f64(k).to(dtype=dtype, device=device)


def moment_matrix(weights: torch.Tensor) -> torch.Tensor:
    """Moment matrices of one filter (k, k) or a stack of filters (..., k, k). Linear in `weights`."""
    _check_kernel(weights)
    basis = moment_basis(weights.shape[-1], dtype=weights.dtype, device=weights.device)
    return basis @ weights @ basis.T


def compute_moment_matrix(filter: SpatialFilter) -> MomentMatrix:
    return MomentMatrix(moment_matrix(filter.weights))


def make_delta_target(i: int, j: int, k: int) -> DeltaTarget:
    _check_order(i, j, k)
    entries = torch.zeros(k, k, dtype=torch.float64)
    entries[i, j] = 1.0
    return DeltaTarget(entries, (i, j))


def delta_targets(k: int, *, dtype: torch.dtype = torch.float64, device: torch.device | str | None = None) -> torch.Tensor:
    """(k*k, k, k) stack of every delta target, row-major over (i, j)."""
    return torch.eye(k * k, dtype=dtype, device=device).reshape(k * k, k, k)


def bank_moment_loss(weights: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Sum over filters of the squared Frobenius norm of M(w) - target."""
    residual = moment_matrix(weights) - targets
    return residual.pow(2).sum()


def moment_loss(filters: Sequence[SpatialFilter]) -> torch.Tensor:
    """Moment loss of a list of filters against their own delta targets."""
    if not filters:
        return torch.zeros((), dtype=torch.float64)

    total = torch.zeros((), dtype=filters[0].weights.dtype, device=filters[0].weights.device)
    for f in filters:
        target = make_delta_target(*f.target_order, f.size).entries.to(f.weights)
        total = total + bank_moment_loss(f.weights, target)
    return total


def exact_derivative_filter(i: int, j: int, k: int, *, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """The unique k x k filter whose moment matrix is exactly the (i, j) delta."""
    _check_order(i, j, k)
    basis = moment_basis(k)
    inverse = torch.linalg.inv(basis)
    target = make_delta_target(i, j, k).entries
    return (inverse @ target @ inverse.T).to(dtype)


def exact_derivative_bank(k: int, *, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """(k*k, k, k) stack of exact derivative filters, row-major over (i, j)."""
    inverse = torch.linalg.inv(moment_basis(k))
    return (inverse @ delta_targets(k) @ inverse.T).to(dtype)


def fit_filters(
    weights: torch.Tensor,
    targets: torch.Tensor,
    *,
    steps: int = 2000,
    method: Literal["lbfgs", "sgd"] = "lbfgs",
    lr: float = 1.0,
    tolerance: float = 0.0,
) -> tuple[torch.Tensor, list[float]]:
    """Fit filters to their moment targets by gradient-based minimization of the moment loss alone.

    Args:
        weights (torch.Tensor): Initial (..., k, k) filters; not modified.
        targets (torch.Tensor): Matching (..., k, k) moment targets.
        steps (int): Optimizer iterations.
        method (str): `lbfgs` (quasi-Newton, handles the ill-conditioned 7x7 basis) or `sgd` (plain gradient descent).
        lr (float): Step size.
        tolerance (float): Stop early once the loss falls below this value.

    Returns:
        tuple[torch.Tensor, list[float]]: Fitted filters and the loss after each iteration.
    """
    fitted = weights.detach().clone().requires_grad_(True)
    history: list[float] = []

    if method == "lbfgs":
        optimizer = torch.optim.LBFGS(
            [fitted],
            lr=lr,
            max_iter=1,
            history_size=100,
            tolerance_grad=1e-15,
            tolerance_change=0.0,
            line_search_fn="strong_wolfe",
        )
    elif method == "sgd":
        optimizer = torch.optim.SGD([fitted], lr=lr)
    else:
        raise ValueError(f"Unknown fitting method '{method}'")

    def closure() -> torch.Tensor:
        optimizer.zero_grad()
        loss = bank_moment_loss(fitted, targets)
        loss.backward()
        return loss

    for _ in range(steps):
        optimizer.step(closure)
        with torch.no_grad():
            current = bank_moment_loss(fitted, targets).item()
        stalled = bool(history) and current == history[-1]
        history.append(current)
        if current < tolerance or stalled:
            break

    return fitted.detach(), history


class AnalyticField(Protocol):
    """A smooth 2-D function with exact partial derivatives, evaluated on tensors."""

    def value(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor: ...

    def derivative(self, i: int, j: int, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor: ...


@dataclass(slots=True, frozen=True)
class LinearField:
    """f(x, y) = a*x + b*y + c."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0

    def value(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return self.a * x + self.b * y + self.c

    def derivative(self, i: int, j: int, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        if i == 0 and j == 0:
            return self.value(x, y)
        if (i, j) == (1, 0):
            return torch.full_like(x, self.a)
        if (i, j) == (0, 1):
            return torch.full_like(x, self.b)
        return torch.zeros_like(x)


@dataclass(slots=True, frozen=True)
class SineField:
    """f(x, y) = sin(a*x + b*y)."""

    a: float = 1.0
    b: float = 0.0

    def value(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return torch.sin(self.a * x + self.b * y)

    def derivative(self, i: int, j: int, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        phase = (i + j) * math.pi / 2
        return self.a**i * self.b**j * torch.sin(self.a * x + self.b * y + phase)


def derivative_error(filter: SpatialFilter, field: AnalyticField, grid_spacing: float, *, size: int = 64) -> float:
    """Max interior error of (w * f) / spacing^(i+j) against the exact derivative of `field`.

    The field is sampled on a `size` x `size` grid with x along rows and y along columns.
    """
    if grid_spacing <= 0:
        raise ValueError(f"grid_spacing must be > 0, got {grid_spacing}")
    k = filter.size
    if size < k:
        raise ValueError(f"Field grid {size}x{size} is smaller than the {k}x{k} filter")

    coords = torch.arange(size, dtype=torch.float64) * grid_spacing
    x, y = torch.meshgrid(coords, coords, indexing="ij")
    i, j = filter.target_order

    weights = filter.weights.to(torch.float64)
    response = F.conv2d(field.value(x, y)[None, None], weights[None, None])[0, 0]
    approx = response / grid_spacing ** (i + j)

    r = k // 2
    exact = field.derivative(i, j, x, y)[r : size - r, r : size - r]
    return (approx - exact).abs().max().item()
