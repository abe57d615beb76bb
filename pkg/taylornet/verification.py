import logging
from collections.abc import Callable

import torch

from .core.models import CheckResult
from .gradcheck import gradcheck_all
from .moment_kernels import SineField, SpatialFilter, bank_moment_loss, delta_targets, derivative_error, fit_filters
from .taylor_cell import TaylorCell

logger = logging.getLogger(__name__)

_SATURATION = 1e4


def _force(conv: torch.nn.Conv2d, value: float):
    """Zero the weights and saturate the bias so sigmoid(conv(.)) is exactly 0 (value < 0) or 1 (value > 0)."""
    with torch.no_grad():
        conv.weight.zero_()
        assert conv.bias is not None
        conv.bias.fill_(value)


def check_moment_fit(kernel_size: int = 7, *, steps: int = 2000, seed: int = 0) -> tuple[list[CheckResult], torch.Tensor]:
    """Fit a full k x k bank from a random start on the moment loss alone."""
    generator = torch.Generator().manual_seed(seed)
    n = kernel_size * kernel_size
    initial = torch.randn(n, kernel_size, kernel_size, generator=generator, dtype=torch.float64) / kernel_size
    targets = delta_targets(kernel_size)
    fitted, history = fit_filters(initial, targets, steps=steps, tolerance=1e-24)

    per_filter = [bank_moment_loss(fitted[m], targets[m]).item() for m in range(n)]
    worst = max(per_filter)
    logger.info("Moment fit: %d iterations, final loss %.3e, worst filter %.3e", len(history), history[-1], worst)
    return [CheckResult(f"moment fit ({n} filters, worst)", worst, 1e-6, worst < 1e-6)], fitted


def check_derivative_oracle(bank: torch.Tensor) -> list[CheckResult]:
    """The (1, 0) filter against d/dx sin(0.3x + 0.2y), at unit and half spacing."""
    k = bank.shape[-1]
    d_dx = SpatialFilter(bank[1 * k + 0], (1, 0))
    field = SineField(0.3, 0.2)
    coarse = derivative_error(d_dx, field, 1.0)
    fine = derivative_error(d_dx, field, 0.5)
    ratio = coarse / fine if fine > 0 else float("inf")
    return [
        CheckResult("d/dx oracle error, spacing 1", coarse, 2e-2, coarse < 2e-2),
        CheckResult("d/dx error reduction on halved spacing", ratio, 1.8, ratio >= 1.8),
    ]


def check_gate_identities(*, trials: int = 100, channels: int = 2, size: int = 6, seed: int = 0) -> list[CheckResult]:
    """Saturated gates reduce the memory update and the correction to their limiting cases exactly."""
    torch.manual_seed(seed)
    cell = TaylorCell(channels, order=2, kernel_size=3).double()
    shape = (1, channels, size, size)

    def run(check: Callable[[torch.Tensor, torch.Tensor], float]) -> float:
        worst = 0.0
        for _ in range(trials):
            with torch.no_grad():
                worst = max(worst, check(torch.randn(shape, dtype=torch.float64), torch.randn(shape, dtype=torch.float64)))
        return worst

    def update_closed(e_prev, h_prev):
        _force(cell.update_gate, -_SATURATION)
        return (cell.mcu_update(e_prev, h_prev).hidden - h_prev).abs().max().item()

    def update_open(e_prev, h_prev):
        _force(cell.update_gate, _SATURATION)
        out = cell.mcu_update(e_prev, h_prev)
        return (out.hidden - out.candidate).abs().max().item()

    def gain_closed(h_tilde, e_t):
        _force(cell.gain, -_SATURATION)
        return (cell.correct(h_tilde, e_t)[0] - h_tilde).abs().max().item()

    def gain_open(h_tilde, e_t):
        _force(cell.gain, _SATURATION)
        return (cell.correct(h_tilde, e_t)[0] - e_t).abs().max().item()

    results = []
    for name, check in (
        ("z=0 keeps the input", update_closed),
        ("z=1 takes the candidate", update_open),
        ("K=0 keeps the Taylor inference", gain_closed),
        ("K=1 takes the memory", gain_open),
    ):
        worst = run(check)
        results.append(CheckResult(f"gate identity: {name}", worst, 1e-12, worst <= 1e-12))
    return results


def check_taylor_anchoring(
    steps: tuple[int, ...] = (1, 5, 9), *, channels: int = 2, size: int = 8, seed: int = 0
) -> list[CheckResult]:
    """The Taylor inference at step t depends on the first input only."""
    torch.manual_seed(seed)
    cell = TaylorCell(channels, order=3, kernel_size=3).double()
    length = max(steps) + 1
    inputs = [torch.randn(1, channels, size, size, dtype=torch.float64, requires_grad=True) for _ in range(length)]

    state = cell.initial_state()
    inferred = {}
    for t, h in enumerate(inputs):
        state, output = cell(state, h)
        inferred[t] = output.inferred

    results = []
    for t in steps:
        grads = torch.autograd.grad(inferred[t].sum(), inputs[1:], retain_graph=True, allow_unused=True)
        leak = max((0.0 if g is None else g.abs().max().item()) for g in grads)
        results.append(CheckResult(f"Taylor inference at step {t} ignores later inputs", leak, 0.0, leak == 0.0))
    return results


def check_gradients(tolerance: float = 1e-4, *, seed: int = 0) -> list[CheckResult]:
    results = []
    for report in gradcheck_all(tolerance, seed=seed):
        logger.debug(report.describe())
        results.append(CheckResult(f"gradcheck {report.component}", report.max_error, tolerance, report.passed))
    return results


def verify_kernels(*, steps: int = 2000, trials: int = 100, seed: int = 0) -> list[CheckResult]:
    """Run the numerical verification suite: moment fit, derivative oracle, gate algebra, anchoring, gradients."""
    fit_results, bank = check_moment_fit(steps=steps, seed=seed)
    results = [
        *fit_results,
        *check_derivative_oracle(bank),
        *check_gate_identities(trials=trials, seed=seed),
        *check_taylor_anchoring(seed=seed),
        *check_gradients(seed=seed),
    ]
    for result in results:
        logger.info(result.describe())
    return results
