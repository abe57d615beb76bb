import csv
import math
from pathlib import Path

import pytest
import torch

from taylornet.core.config import ModelConfig
from taylornet.core.models import VideoBatch
from taylornet.evaluation.rollout import MetricsReport, evaluate_predictor, persistence_baseline, rollout_eval
from taylornet.model import TaylorNet


def _static_batch(n: int = 3, length: int = 6) -> VideoBatch:
    frame = torch.rand(n, 1, 1, 16, 16)
    return VideoBatch(frame.expand(n, length, 1, 16, 16).clone())


class TestEvaluatePredictor:
    def test_persistence_on_static_sequences(self):
        report = persistence_baseline(_static_batch(), [1, 3], input_length=3)
        assert report.label == "persistence"
        assert report.horizons == [1, 3]
        assert report.aggregates[3]["mse"] == 0.0
        assert report.num_sequences == 3

    def test_prefix_consistency(self):
        batch = VideoBatch(torch.rand(4, 8, 1, 16, 16))
        long = persistence_baseline(batch, [2, 5], input_length=3)
        short = persistence_baseline(batch, [2], input_length=3)
        assert long.aggregates[2] == pytest.approx(short.aggregates[2], rel=1e-12)
        assert long.curves[5]["mse"][:2] == pytest.approx(short.curves[2]["mse"], rel=1e-12)

    def test_batching_does_not_change_results(self):
        batch = VideoBatch(torch.rand(5, 6, 1, 16, 16))
        one = persistence_baseline(batch, [3], input_length=3, batch_size=1)
        all_at_once = persistence_baseline(batch, [3], input_length=3, batch_size=5)
        assert one.aggregates[3] == pytest.approx(all_at_once.aggregates[3], rel=1e-12)

    def test_predictor_sees_the_longest_horizon_once(self):
        calls = []

        def predict(inputs: torch.Tensor, n: int) -> torch.Tensor:
            calls.append(n)
            return inputs[:, -1:].expand(-1, n, -1, -1, -1)

        evaluate_predictor(predict, _static_batch(2, 8), [1, 4, 2], input_length=3, batch_size=8)
        assert calls == [4]

    @pytest.mark.parametrize("horizons", [[], [0], [2, -1]])
    def test_invalid_horizons(self, horizons):
        with pytest.raises(ValueError):
            persistence_baseline(_static_batch(), horizons, input_length=3)

    def test_sequences_too_short(self):
        with pytest.raises(ValueError, match="needs"):
            persistence_baseline(_static_batch(length=4), [2], input_length=3)


class TestRolloutEval:
    def test_model_report(self, small_model_config: ModelConfig):
        model = TaylorNet(small_model_config)
        batch = VideoBatch(torch.rand(2, 5, 1, 32, 32))
        report = rollout_eval(model, batch, [1, 2], batch_size=1, config_digest="abc", checkpoint_id="model.pt")

        assert report.horizons == [1, 2]
        assert report.config_digest == "abc"
        assert len(report.curves[2]["mse"]) == 2
        assert all(math.isfinite(value) for value in report.aggregates[1].values())

    def test_frame_shape_mismatch(self, small_model_config: ModelConfig):
        with pytest.raises(ValueError, match="do not match"):
            rollout_eval(TaylorNet(small_model_config), VideoBatch(torch.rand(1, 5, 1, 16, 16)), [1])


class TestMetricsReport:
    def test_files(self, tmp_path: Path):
        report = persistence_baseline(VideoBatch(torch.rand(2, 6, 1, 16, 16)), [1, 3], input_length=3)

        with report.write_csv(tmp_path / "metrics.csv").open(encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
        assert [row["horizon"] for row in rows] == ["1", "3"]
        assert "mse_sequence" in rows[0]

        with report.write_curves_csv(tmp_path / "curves.csv").open(encoding="utf-8", newline="") as f:
            assert len(list(csv.DictReader(f))) == 1 + 3

        payload = report.to_dict()
        assert set(payload["aggregates"]) == {"1", "3"}
        assert "persistence: 2 sequences" in report.summary()

    def test_empty_report(self):
        assert MetricsReport().horizons == []
