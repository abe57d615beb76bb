"""
Rollout throughput benchmark: free-running prediction speed of a TaylorNet.

Measures end-to-end `TaylorNet.rollout` time for a fixed batch of seeded bouncing-digit
inputs, with and without per-step probes, and the persistence baseline for scale.

Environment variables:
- BENCH_CHECKPOINT (default: empty, a freshly seeded tiny-preset model)
- BENCH_DEVICE (default: cpu)
- BENCH_BATCH (default: 16)
- BENCH_FRAMES (default: 30)
- BENCH_ROUNDS (default: 3)
- BENCH_WARMUP (default: 1)
"""

import gc
import os
import time
from collections.abc import Callable
from pathlib import Path

import torch

from taylornet import TaylorNet, TrainConfig
from taylornet.checkpoint import load_checkpoint
from taylornet.data.generators import generate_moving_digits
from taylornet.data.sprites import load_digit_sprites

BENCH_CHECKPOINT = os.getenv("BENCH_CHECKPOINT", default="")
BENCH_DEVICE = os.getenv("BENCH_DEVICE", default="cpu")
BENCH_BATCH = int(os.getenv("BENCH_BATCH", default="16"))
BENCH_FRAMES = int(os.getenv("BENCH_FRAMES", default="30"))
BENCH_ROUNDS = int(os.getenv("BENCH_ROUNDS", default="3"))
BENCH_WARMUP = int(os.getenv("BENCH_WARMUP", default="1"))


def _load_model() -> TaylorNet:
    if BENCH_CHECKPOINT:
        model, _ = load_checkpoint(Path(BENCH_CHECKPOINT))
    else:
        torch.manual_seed(0)
        model = TaylorNet(TrainConfig.for_preset("tiny").model_config())
    return model.to(BENCH_DEVICE).eval()


def _inputs(model: TaylorNet) -> torch.Tensor:
    config = TrainConfig.for_preset("mmnist" if model.config.frame_height == 64 else "tiny")
    sprites = load_digit_sprites(size=config.data_preset.sprite_size)
    batch = generate_moving_digits(
        sprites, config.data_preset, batch_size=BENCH_BATCH, length=model.config.input_length, seed=10_000
    )
    return batch.frames.to(BENCH_DEVICE)


def _sync() -> None:
    if BENCH_DEVICE.startswith("cuda"):
        torch.cuda.synchronize()


def _print_rounds(label: str, frames: int, durations: list[float]) -> None:
    print(f"\nRollout benchmark ({label})")
    for idx, dur in enumerate(durations, start=1):
        print(f"Round {idx}: {dur * 1000:8.2f} ms ({frames / dur:,.1f} frames/s, {(dur / frames) * 1e3:,.2f} ms/frame)")
    if durations:
        avg = sum(durations) / len(durations)
        print(f"Avg:     {avg * 1000:8.2f} ms ({frames / avg:,.1f} frames/s, {(avg / frames) * 1e3:,.2f} ms/frame)")


def _bench(label: str, run: Callable[[], torch.Tensor]) -> None:
    with torch.no_grad():
        for _ in range(BENCH_WARMUP):
            run()
        _sync()

        durations: list[float] = []
        for _ in range(BENCH_ROUNDS):
            gc.collect()
            gc.disable()
            t0 = time.perf_counter()
            out = run()
            _sync()
            dur = time.perf_counter() - t0
            gc.enable()
            if not torch.isfinite(out).all():
                raise RuntimeError("Non-finite rollout")
            durations.append(dur)

    _print_rounds(label, BENCH_BATCH * BENCH_FRAMES, durations)


def main() -> None:
    model = _load_model()
    inputs = _inputs(model)
    print(f"Batch: {BENCH_BATCH}, frames: {BENCH_FRAMES}, rounds: {BENCH_ROUNDS}, warmup: {BENCH_WARMUP}")
    print(f"Device: {BENCH_DEVICE}, checkpoint: {BENCH_CHECKPOINT or '(fresh tiny model)'}")

    _bench("taylornet", lambda: model.rollout(inputs, BENCH_FRAMES).frames)
    _bench("taylornet + probes", lambda: model.rollout(inputs, BENCH_FRAMES, record=True).frames)
    _bench("persistence", lambda: inputs[:, -1:].expand(-1, BENCH_FRAMES, -1, -1, -1).clone())


if __name__ == "__main__":
    main()
