"""
Finite-difference verification of analytic gradients.

Each registered component builds a scalar function of named float64 tensors
(inputs and parameters). Autograd gradients are compared with central differences
x +/- h, h = step * max(1, |x|), and the error of a group is

    max|analytic - numeric| / max(max|analytic|, max|numeric|)
"""

from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Final, NamedTuple

import torch

from .exceptions import ConfigError, NumericalError
from .moment_kernels import bank_moment_loss, delta_targets
from .pde_model import PdeModel
from .residual_branch import ConvLstmCell
from .taylor_cell import TaylorCell, taylor_cell_step
from .training import compute_loss

DEFAULT_STEP: Final = 1e-4


class Problem(NamedTuple):
    """A scalar objective and the tensors it is differentiated with respect to."""

    objective: Callable[[], torch.Tensor]
    groups: dict[str, torch.Tensor]


@dataclass(slots=True)
class GradcheckReport:
    component: str
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def describe(self) -> str:
        lines = [f"{self.component}: max relative error {self.max_error:.3e} (tolerance {self.tolerance:.1e})"]
        lines += [f"  {name}: {error:.3e}" for name, error in self.errors.items()]
        return "\n".join(lines)


def _rand(generator: torch.Generator, *shape: int) -> torch.Tensor:
    return torch.randn(*shape, generator=generator, dtype=torch.float64)


def _module_groups(module: torch.nn.Module, prefix: str = "") -> dict[str, torch.Tensor]:
    return {f"{prefix}{name}": p for name, p in module.named_parameters()}


def _linear(shape: tuple[int, ...], generator: torch.Generator) -> Problem:
    (n,) = shape
    matrix = _rand(generator, n, n).requires_grad_(True)
    x = _rand(generator, n).requires_grad_(True)
    weights = _rand(generator, n)
    return Problem(lambda: weights @ (matrix @ x), {"matrix": matrix, "input": x})


def _moment_loss(shape: tuple[int, ...], generator: torch.Generator) -> Problem:
    n, k, _ = shape
    weights = _rand(generator, n, k, k).requires_grad_(True)
    targets = delta_targets(k)[:n]
    return Problem(lambda: bank_moment_loss(weights, targets), {"weights": weights})


def _temporal_derivative(shape: tuple[int, ...], generator: torch.Generator) -> Problem:
    b, c, h, w = shape
    pde = PdeModel(c, kernel_size=3).double()
    x = _rand(generator, b, c, h, w).requires_grad_(True)
    probe = _rand(generator, b, c, h, w)
    return Problem(lambda: (pde.temporal_derivative(x) * probe).sum(), {"input": x, **_module_groups(pde)})


def _taylor_cell_step(shape: tuple[int, ...], generator: torch.Generator) -> Problem:
    b, c, h, w = shape
    cell = TaylorCell(c, order=3, kernel_size=3).double()
    first = _rand(generator, b, c, h, w).requires_grad_(True)
    current = _rand(generator, b, c, h, w).requires_grad_(True)
    probe = _rand(generator, b, c, h, w)

    def objective() -> torch.Tensor:
        state, _ = taylor_cell_step(cell, cell.initial_state(), first)
        _, prediction = taylor_cell_step(cell, state, current)
        return (prediction * probe).sum()

    return Problem(objective, {"first": first, "current": current, **_module_groups(cell)})


def _convlstm_step(shape: tuple[int, ...], generator: torch.Generator) -> Problem:
    b, c, h, w = shape
    cell = ConvLstmCell(c, c).double()
    x, hidden, memory = (_rand(generator, b, c, h, w).requires_grad_(True) for _ in range(3))
    probe_h, probe_c = _rand(generator, b, c, h, w), _rand(generator, b, c, h, w)

    def objective() -> torch.Tensor:
        h_next, c_next = cell(x, hidden, memory)
        return (h_next * probe_h).sum() + (c_next * probe_c).sum()

    return Problem(objective, {"input": x, "hidden": hidden, "cell": memory, **_module_groups(cell)})


def _compute_loss(shape: tuple[int, ...], generator: torch.Generator) -> Problem:
    pde = PdeModel(1, kernel_size=3).double()
    predictions = torch.rand(*shape, generator=generator, dtype=torch.float64).requires_grad_(True)
    targets = torch.rand(*shape, generator=generator, dtype=torch.float64)
    return Problem(
        lambda: compute_loss(pde, predictions, targets).total,
        {"predictions": predictions, "derivative_bank": pde.derivative_bank},
    )


COMPONENTS: Final[dict[str, tuple[Callable[[tuple[int, ...], torch.Generator], Problem], tuple[int, ...]]]] = {
    "linear": (_linear, (6,)),
    "moment_loss": (_moment_loss, (4, 3, 3)),
    "temporal_derivative": (_temporal_derivative, (1, 2, 5, 5)),
    "taylor_cell_step": (_taylor_cell_step, (1, 2, 4, 4)),
    "convlstm_step": (_convlstm_step, (1, 2, 4, 4)),
    "compute_loss": (_compute_loss, (1, 2, 1, 4, 4)),
}


def _numeric_gradient(objective: Callable[[], torch.Tensor], tensor: torch.Tensor, indices: torch.Tensor, step: float):
    flat = tensor.data.view(-1)
    numeric = torch.empty(len(indices), dtype=torch.float64)
    with torch.no_grad():
        for n, index in enumerate(indices.tolist()):
            original = flat[index].item()
            h = step * max(1.0, abs(original))
            flat[index] = original + h
            upper = objective().item()
            flat[index] = original - h
            lower = objective().item()
            flat[index] = original
            numeric[n] = (upper - lower) / (2 * h)
    return numeric


def gradcheck(
    component: str,
    input_shape: tuple[int, ...] | None = None,
    tolerance: float = 1e-4,
    *,
    step: float = DEFAULT_STEP,
    max_entries: int = 48,
    seed: int = 0,
) -> GradcheckReport:
    """
    Compare autograd gradients of a registered component with central finite differences.

    Args:
        component (str): One of `COMPONENTS`.
        input_shape (tuple[int, ...] | None): Shape of the component's main input; defaults to a tiny shape.
        tolerance (float): Pass threshold on the max relative error.
        step (float): Relative finite-difference step.
        max_entries (int): Entries checked per group; larger groups are subsampled.
        seed (int): Seed for inputs, probes and subsampling.

    Raises:
        ConfigError: If the component is unknown.
        NumericalError: If an analytic gradient is non-finite.
    """
    if component not in COMPONENTS:
        raise ConfigError(f"Unknown gradcheck component '{component}', expected one of: {', '.join(COMPONENTS)}")

    build, default_shape = COMPONENTS[component]
    generator = torch.Generator().manual_seed(seed)
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        problem = build(input_shape or default_shape, generator)

    names = list(problem.groups)
    tensors = [problem.groups[name] for name in names]
    analytic = torch.autograd.grad(problem.objective(), tensors, allow_unused=True)

    report = GradcheckReport(component, tolerance)
    for name, tensor, grad in zip(names, tensors, analytic, strict=True):
        grad = torch.zeros_like(tensor) if grad is None else grad
        if not torch.isfinite(grad).all():
            raise NumericalError(f"Non-finite analytic gradient for {component}.{name}")

        count = tensor.numel()
        if count > max_entries:
            indices = torch.randperm(count, generator=generator)[:max_entries]
        else:
            indices = torch.arange(count)
        expected = grad.reshape(-1)[indices].detach()
        numeric = _numeric_gradient(problem.objective, tensor, indices, step)

        scale = max(expected.abs().max().item(), numeric.abs().max().item())
        report.errors[name] = 0.0 if scale == 0 else (expected - numeric).abs().max().item() / scale
    return report


def gradcheck_all(tolerance: float = 1e-4, *, seed: int = 0) -> list[GradcheckReport]:
    return [gradcheck(name, tolerance=tolerance, seed=seed) for name in COMPONENTS]
