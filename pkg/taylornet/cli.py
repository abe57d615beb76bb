"""
Command-line entry point.

Exit codes: 0 success, 1 invalid configuration or flags, 2 numerical failure
(divergence or a verification tolerance breach), 3 data or I/O failure.
"""

import argparse
import logging
import os
import shutil
import subprocess
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, Final, NoReturn

import torch

from . import __version__
from .checkpoint import load_checkpoint
from .core.config import ABLATION_FLAGS, PRESETS, TrainConfig, get_preset, load_config
from .core.models import VideoBatch
from .core.serialization import read_json, write_json
from .data.container import import_moving_mnist, load_video_batch, write_container
from .data.download import KNOWN_SOURCES, fetch
from .data.generators import generate_moving_digits
from .data.sprites import load_digit_sprites
from .evaluation.ablation import parse_suite, run_ablation
from .evaluation.plots import plot_mse_curves
from .evaluation.rollout import persistence_baseline, rollout_eval
from .evaluation.visuals import export_visuals
from .exceptions import ConfigError, DataError, NumericalError, TaylorNetError, ToleranceError
from .training import TRAIN_LOG, train
from .verification import verify_kernels

logger = logging.getLogger(__name__)

EXIT_OK: Final = 0
EXIT_CONFIG: Final = 1
EXIT_NUMERICAL: Final = 2
EXIT_IO: Final = 3
OUTPUT_ROOT_ENV: Final = "TAYLORNET_OUTPUT_ROOT"
MANIFEST: Final = "manifest.json"

# TrainConfig fields settable from flags of `train` and `ablate`.
_TRAIN_FLAGS: Final = (
    "lr",
    "epochs",
    "batch_size",
    "moment_weight",
    "teacher_prob",
    "teacher_schedule",
    "teacher_prob_final",
    "teacher_granularity",
    "seed",
    "ablation",
    "order",
    "latent_channels",
    "encoder_width",
    "sequences_per_epoch",
    "checkpoint_every",
    "num_workers",
    "device",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _horizons(value: str) -> list[int]:
    try:
        horizons = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'") from None
    if not horizons or any(h < 1 for h in horizons):
        raise argparse.ArgumentTypeError("horizons must be integers >= 1")
    return horizons


def _git_revision() -> str | None:
    try:
        completed = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return None
    return completed.stdout.strip() or None


def output_dir(args: argparse.Namespace) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / args.command


def prepare_output(out: Path, *, force: bool, keep: Sequence[str] = ()) -> Path:
    """Create `out`; refuse a non-empty directory unless `force` (which clears it except `keep`)."""
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(f"Output directory {out} is not empty; pass --force to overwrite it")
        for child in out.iterdir():
            if child.name in keep:
                continue
            if child.is_dir():
                shutil.rmtree(child)
            else:
                child.unlink()
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, args: argparse.Namespace, *, config: dict[str, Any] | None = None, **extra: Any) -> Path:
    """Record the resolved configuration, seed and version stamp of a run."""
    flags = {k: v for k, v in vars(args).items() if k not in ("handler", "command")}
    manifest = {
        "command": args.command,
        "flags": flags,
        "config_file": args.config if hasattr(args, "config") else None,
        "config": config,
        "seed": (config or {}).get("seed", getattr(args, "seed", None)),
        "version": __version__,
        "git": _git_revision(),
        **extra,
    }
    path = out / MANIFEST
    write_json(path, manifest)
    return path


def resolve_train_config(args: argparse.Namespace) -> TrainConfig:
    overrides: dict[str, Any] = {name: getattr(args, name) for name in _TRAIN_FLAGS if getattr(args, name) is not None}
    if args.config is not None:
        return load_config(args.config, preset=args.preset, **overrides)
    return TrainConfig.for_preset(args.preset or "tiny", **overrides)


def _config_from_metadata(metadata: dict[str, Any]) -> TrainConfig:
    try:
        return TrainConfig(**metadata["config"])
    except (KeyError, TypeError) as e:
        raise ConfigError(f"Checkpoint metadata has no usable training config: {e}") from e


def _test_set(args: argparse.Namespace, config: TrainConfig, length: int) -> VideoBatch:
    if args.data is not None:
        return load_video_batch(args.data)
    preset = config.data_preset
    sprites = load_digit_sprites(args.sprites, size=preset.sprite_size)
    return generate_moving_digits(sprites, preset, batch_size=args.test_size, length=length, seed=args.test_seed)


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_train_config(args)
    out = prepare_output(output_dir(args), force=args.force)
    write_manifest(out, args, config=config.to_dict(), config_digest=config.digest())

    sprites = load_digit_sprites(args.sprites, size=config.data_preset.sprite_size) if args.sprites else None
    result = train(config, out, sprites=sprites)
    write_json(
        out / "summary.json",
        {"steps": result.steps, "initial_moment": result.initial_moment, "epochs": result.epochs},
    )
    print(f"checkpoint: {result.checkpoint}\nlog: {out / TRAIN_LOG}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model, metadata = load_checkpoint(args.checkpoint)
    config = _config_from_metadata(metadata)
    out = prepare_output(output_dir(args), force=args.force)
    write_manifest(out, args, config=config.to_dict(), checkpoint=str(args.checkpoint))

    test_set = _test_set(args, config, model.config.input_length + max(args.horizons))
    report = rollout_eval(
        model,
        test_set,
        args.horizons,
        batch_size=args.batch_size,
        config_digest=metadata.get("config_digest"),
        checkpoint_id=str(args.checkpoint),
    )
    baseline = persistence_baseline(test_set, args.horizons, input_length=model.config.input_length)

    report.write_csv(out / "metrics.csv")
    report.write_curves_csv(out / "curves.csv")
    baseline.write_csv(out / "persistence.csv")
    write_json(out / "report.json", {"model": report.to_dict(), "persistence": baseline.to_dict()})
    summary = f"{report.summary()}\n{baseline.summary()}\n"
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    for h in report.horizons:
        plot_mse_curves([report, baseline], out / f"mse_curve_{h}.png", horizon=h)
    print(summary, end="")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    config = resolve_train_config(args)
    finished = () if args.retrain else tuple(variant.name for variant in parse_suite(args.suite))
    out = prepare_output(output_dir(args), force=args.force, keep=finished)
    write_manifest(out, args, config=config.to_dict(), suite=args.suite)

    test_set = _test_set(args, config, config.input_length + args.horizon)
    sprites = load_digit_sprites(args.sprites, size=config.data_preset.sprite_size) if args.sprites else None
    report = run_ablation(args.suite, config, test_set, out, horizon=args.horizon, sprites=sprites)
    print(report.table())
    return EXIT_OK


def cmd_visualize(args: argparse.Namespace) -> int:
    model, metadata = load_checkpoint(args.checkpoint)
    config = _config_from_metadata(metadata)
    out = prepare_output(output_dir(args), force=args.force)
    write_manifest(out, args, config=config.to_dict(), checkpoint=str(args.checkpoint))

    t = model.config.input_length
    args.test_size = args.count
    batch = _test_set(args, config, t + args.horizon).slice(0, args.count)
    inputs, future = batch.split(t)
    targets = future[:, : args.horizon]
    written = export_visuals(model, inputs, targets, out, per_order=args.per_order, scale=args.scale)
    print("\n".join(str(path) for path in written))
    return EXIT_OK


def cmd_verify_kernels(args: argparse.Namespace) -> int:
    out = prepare_output(output_dir(args), force=args.force)
    write_manifest(out, args)

    results = verify_kernels(steps=args.steps, trials=args.trials, seed=args.seed)
    lines = [result.describe() for result in results]
    (out / "verification.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_json(out / "verification.json", [result._asdict() for result in results])
    print("\n".join(lines))

    failed = [result.name for result in results if not result.passed]
    if failed:
        raise ToleranceError(f"{len(failed)} check(s) exceeded tolerance: {', '.join(failed)}")
    return EXIT_OK


def cmd_generate_data(args: argparse.Namespace) -> int:
    preset = get_preset(args.preset)
    out = prepare_output(output_dir(args), force=args.force)
    write_manifest(out, args)

    sprites = load_digit_sprites(args.sprites, size=preset.sprite_size)
    batch = generate_moving_digits(sprites, preset, batch_size=args.count, length=args.length, seed=args.seed)
    frames = (batch.frames * 255).round().to(torch.uint8) if args.uint8 else batch.frames
    path = write_container(out / "sequences.tnvb", frames, {"seed": args.seed, **batch.metadata})
    print(path)
    return EXIT_OK


def cmd_fetch_data(args: argparse.Namespace) -> int:
    out = output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    paths = fetch(args.source, out, overwrite=args.force)
    if args.convert and "moving-mnist-test" in args.source:
        source = out / KNOWN_SOURCES["moving-mnist-test"].filename
        paths.append(import_moving_mnist(source, out / "moving_mnist_test.tnvb"))
    write_manifest(out, args, files=[p.name for p in paths])
    print("\n".join(str(p) for p in paths))
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--out", type=Path, help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<command>)")
    parser.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")


def _add_train_options(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="TOML config file with a [train] table")
    parser.add_argument("--preset", choices=sorted(PRESETS))
    parser.add_argument("--lr", type=float)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--moment-weight", type=float, help="weight lambda of the moment loss")
    parser.add_argument("--teacher-prob", type=float)
    parser.add_argument("--teacher-schedule", choices=("constant", "linear"))
    parser.add_argument("--teacher-prob-final", type=float)
    parser.add_argument("--teacher-granularity", choices=("batch", "epoch"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--ablation", choices=sorted(ABLATION_FLAGS))
    parser.add_argument("--order", type=int, help="Taylor expansion order")
    parser.add_argument("--latent-channels", type=int)
    parser.add_argument("--encoder-width", type=int)
    parser.add_argument("--sequences-per-epoch", type=int)
    parser.add_argument("--checkpoint-every", type=int)
    parser.add_argument("--num-workers", type=int)
    parser.add_argument("--device")
    parser.add_argument("--sprites", type=Path, help="sprite file (.npy or MNIST IDX); default: built-in glyphs")


def _add_test_options(parser: argparse.ArgumentParser, *, size: int, sprites: bool = True):
    parser.add_argument("--data", type=Path, help="test sequences container (.tnvb); default: seeded synthetic split")
    parser.add_argument("--test-size", type=int, default=size)
    parser.add_argument("--test-seed", type=int, default=10_000)
    if sprites:
        parser.add_argument("--sprites", type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="taylornet", description="Taylor-expansion video prediction")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    handlers: dict[str, Callable[[argparse.Namespace], int]] = {}

    p = sub.add_parser("train", help="train a model")
    _add_train_options(p)
    _add_common(p)
    handlers["train"] = cmd_train

    p = sub.add_parser("eval", help="rollout metrics of a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--horizons", type=_horizons, default=[10], help="comma-separated, e.g. 10,30,90")
    p.add_argument("--batch-size", type=int, default=16)
    _add_test_options(p, size=256)
    _add_common(p)
    handlers["eval"] = cmd_eval

    p = sub.add_parser("ablate", help="train and compare model variants")
    p.add_argument("--suite", default="full,no_mcu,taylorcell_only,order_1-4")
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--retrain", action="store_true", help="with --force, also discard finished variant runs")
    _add_train_options(p)
    _add_test_options(p, size=256, sprites=False)
    _add_common(p)
    handlers["ablate"] = cmd_ablate

    p = sub.add_parser("visualize", help="grids and animations of a checkpoint's rollouts")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--per-order", action="store_true", help="add one row per Taylor expansion order")
    p.add_argument("--scale", type=int, default=2)
    _add_test_options(p, size=4)
    _add_common(p)
    handlers["visualize"] = cmd_visualize

    p = sub.add_parser("verify-kernels", help="numerical verification suite")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    handlers["verify-kernels"] = cmd_verify_kernels

    p = sub.add_parser("generate-data", help="write seeded bouncing-digit sequences to a container")
    p.add_argument("--preset", choices=sorted(PRESETS), default="tiny")
    p.add_argument("--count", type=int, default=256)
    p.add_argument("--length", type=int, default=20)
    p.add_argument("--seed", type=int, default=10_000)
    p.add_argument("--sprites", type=Path)
    p.add_argument("--uint8", action="store_true", help="quantize frames to uint8")
    _add_common(p)
    handlers["generate-data"] = cmd_generate_data

    p = sub.add_parser("fetch-data", help="download public digit archives")
    p.add_argument("--source", action="append", choices=sorted(KNOWN_SOURCES), default=None)
    p.add_argument("--convert", action="store_true", help="convert the Moving-MNIST array to a container")
    _add_common(p)
    handlers["fetch-data"] = cmd_fetch_data

    parser.set_defaults(handlers=handlers)
    return parser


def _validate(parser: argparse.ArgumentParser, args: argparse.Namespace):
    for name in ("test_size", "count", "length", "horizon", "steps", "trials", "batch_size", "scale"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            parser.error(f"--{name.replace('_', '-')} must be >= 1")
    if args.command == "fetch-data" and not args.source:
        args.source = ["moving-mnist-test"]
    if getattr(args, "retrain", False) and not args.force:
        parser.error("--retrain requires --force")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    handler = args.handlers[args.command]
    del args.handlers

    try:
        return handler(args)
    except ConfigError as e:
        logger.error("Invalid configuration: %s", e)
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL
    except (DataError, OSError) as e:
        logger.error("I/O failure: %s", e)
        return EXIT_IO
    except (TaylorNetError, ValueError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG


def read_manifest(out: Path) -> dict[str, Any]:
    return read_json(out / MANIFEST)


__all__ = ("build_parser", "main", "read_manifest")
