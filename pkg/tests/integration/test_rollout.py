import math

import pytest
import torch

from taylornet.checkpoint import load_checkpoint
from taylornet.core.models import VideoBatch
from taylornet.evaluation.rollout import persistence_baseline, rollout_eval

from ._types import TrainedRun

pytestmark = pytest.mark.integration


def test_beats_persistence(tiny_run: TrainedRun, held_out: VideoBatch):
    model, metadata = load_checkpoint(tiny_run.result.checkpoint)
    split = VideoBatch(held_out.frames[:, :20])

    report = rollout_eval(model, split, [10], config_digest=metadata["config_digest"])
    baseline = persistence_baseline(split, [10], input_length=model.config.input_length)

    assert report.aggregates[10]["mse"] <= 0.8 * baseline.aggregates[10]["mse"], (
        f"{report.summary()}\n{baseline.summary()}"
    )


def test_long_horizon_stability(tiny_run: TrainedRun, held_out: VideoBatch):
    model, _ = load_checkpoint(tiny_run.result.checkpoint)
    inputs = held_out.frames[:8, :10]

    with torch.no_grad():
        frames = model.rollout(inputs, 90).frames
    assert frames.shape == (8, 90, 1, 32, 32)
    assert torch.isfinite(frames).all()
    assert frames.min().item() >= 0.0
    assert frames.max().item() <= 1.0

    with torch.no_grad():
        short = model.rollout(inputs, 10).frames
    assert torch.equal(frames[:, :10], short)


def test_horizon_curves(tiny_run: TrainedRun, held_out: VideoBatch):
    model, _ = load_checkpoint(tiny_run.result.checkpoint)
    report = rollout_eval(model, held_out.slice(0, 16), [10, 30, 90])

    assert report.horizons == [10, 30, 90]
    for h in report.horizons:
        assert len(report.curves[h]["mse"]) == h
        assert all(math.isfinite(value) for value in report.curves[h]["mse"])
