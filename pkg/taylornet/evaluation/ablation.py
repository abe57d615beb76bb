import csv
import logging
import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final, cast

import numpy as np

from ..checkpoint import load_checkpoint
from ..core.config import ABLATION_FLAGS, Ablation, TrainConfig
from ..core.models import VideoBatch
from ..core.serialization import write_json
from ..exceptions import ConfigError
from ..training import FINAL_CHECKPOINT, train
from .plots import plot_order_sweep
from .rollout import MetricsReport, rollout_eval

logger = logging.getLogger(__name__)

MAX_ORDER: Final = 6
_ORDER_PATTERN: Final = re.compile(r"order_(\d+)(?:-(\d+))?")


@dataclass(slots=True, frozen=True)
class Variant:
    """A named model variant: an ablation flag set and a Taylor expansion order (None keeps the base order)."""

    name: str
    ablation: Ablation = "full"
    order: int | None = None

    def configure(self, base: TrainConfig) -> TrainConfig:
        if self.order is None:
            return base.with_overrides(ablation=self.ablation)
        return base.with_overrides(ablation=self.ablation, order=self.order)


def parse_suite(suite: str | Sequence[str]) -> list[Variant]:
    """
    Parse variant names: `full`, `no_mcu`, `taylorcell_only`, `residual_only`,
    `order_N` (1 <= N <= 6) and ranges `order_A-B`. Accepts a comma-separated string.

    Raises:
        ConfigError: On unknown names or orders outside [1, 6].
    """
    names = [s.strip() for s in (suite.split(",") if isinstance(suite, str) else suite) if s.strip()]
    if not names:
        raise ConfigError("Ablation suite is empty")

    variants: list[Variant] = []
    for name in names:
        if name in ABLATION_FLAGS:
            variants.append(Variant(name, ablation=cast(Ablation, name)))
            continue
        match = _ORDER_PATTERN.fullmatch(name)
        if match is None:
            known = ", ".join([*ABLATION_FLAGS, "order_N", "order_A-B"])
            raise ConfigError(f"Unknown ablation variant '{name}', expected one of: {known}")
        first = int(match.group(1))
        last = int(match.group(2) or first)
        if not 1 <= first <= last <= MAX_ORDER:
            raise ConfigError(f"Expansion orders in '{name}' must lie in [1, {MAX_ORDER}]")
        variants.extend(Variant(f"order_{order}", order=order) for order in range(first, last + 1))

    unique = {variant.name: variant for variant in variants}
    return list(unique.values())


@dataclass(slots=True)
class AblationRow:
    variant: Variant
    config: TrainConfig
    report: MetricsReport


@dataclass(slots=True)
class AblationReport:
    rows: list[AblationRow] = field(default_factory=list)
    horizon: int = 10

    def order_sweep(self, metric: str = "mse") -> tuple[list[int], list[float]]:
        points = sorted(
            (row.variant.order, row.report.aggregates[self.horizon][metric])
            for row in self.rows
            if row.variant.order is not None
        )
        return [order for order, _ in points], [value for _, value in points]

    def write_csv(self, path: Path) -> Path:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["variant", "ablation", "order", "seed", "config_digest", "mse", "mae", "ssim", "psnr", "bce"])
            for row in self.rows:
                a = row.report.aggregates[self.horizon]
                writer.writerow(
                    [
                        row.variant.name,
                        row.config.ablation,
                        row.config.order,
                        row.config.seed,
                        row.config.digest(),
                        *(f"{a[m]:.6f}" for m in ("mse", "mae", "ssim", "psnr", "bce")),
                    ]
                )
        return path

    def table(self) -> str:
        header = f"{'variant':<16} {'order':>5} {'MSE':>10} {'MAE':>10} {'SSIM':>8}"
        lines = [f"{self.horizon} -> prediction horizon", header, "-" * len(header)]
        for row in self.rows:
            a = row.report.aggregates[self.horizon]
            lines.append(
                f"{row.variant.name:<16} {row.config.order:>5} {a['mse']:>10.3f} {a['mae']:>10.3f} {a['ssim']:>8.4f}"
            )
        return "\n".join(lines)


def run_ablation(
    suite: str | Sequence[str],
    base: TrainConfig,
    test_set: VideoBatch,
    out_dir: Path,
    *,
    horizon: int = 10,
    sprites: np.ndarray | None = None,
) -> AblationReport:
    """
    Train (or reuse) every variant with the base config's seed and data, then evaluate each
    on the same test set.

    A variant directory that already holds a final checkpoint is loaded instead of retrained,
    provided its recorded config digest matches; otherwise a ConfigError asks for `--retrain`.
    Variants whose resolved configs coincide share one run.
    """
    variants = parse_suite(suite)
    report = AblationReport(horizon=horizon)
    finished: dict[str, MetricsReport] = {}

    for variant in variants:
        config = variant.configure(base)
        digest = config.digest()
        if digest in finished:
            logger.info("Variant %s matches an earlier configuration, reusing its results", variant.name)
            report.rows.append(AblationRow(variant, config, finished[digest]))
            continue

        run_dir = out_dir / variant.name
        checkpoint = run_dir / FINAL_CHECKPOINT
        if checkpoint.exists():
            logger.info("Loading %s from %s", variant.name, checkpoint)
            model, metadata = load_checkpoint(checkpoint)
            stored = metadata.get("config_digest")
            if stored != digest:
                raise ConfigError(
                    f"{checkpoint} was trained under config {stored}, not {digest}; "
                    "rerun with --force --retrain to train the variant again"
                )
        else:
            logger.info("Training variant %s (seed %d)", variant.name, config.seed)
            result = train(config, run_dir, sprites=sprites)
            model, _ = load_checkpoint(result.checkpoint)

        metrics = rollout_eval(model, test_set, [horizon], config_digest=digest, checkpoint_id=str(checkpoint))
        metrics.label = variant.name
        finished[digest] = metrics
        report.rows.append(AblationRow(variant, config, metrics))

    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_dir / "ablation.csv")
    (out_dir / "ablation.txt").write_text(report.table() + "\n", encoding="utf-8")
    write_json(out_dir / "ablation.json", {row.variant.name: row.report.to_dict() for row in report.rows})

    orders, values = report.order_sweep()
    if len(orders) >= 2:
        plot_order_sweep(orders, values, out_dir / "order_sweep.png")
    logger.info("\n%s", report.table())
    return report
