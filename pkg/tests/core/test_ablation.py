from pathlib import Path

import pytest
import torch

from taylornet.core.config import TrainConfig
from taylornet.core.models import VideoBatch
from taylornet.evaluation import ablation
from taylornet.evaluation.ablation import run_ablation
from taylornet.exceptions import ConfigError
from taylornet.training import FINAL_CHECKPOINT


@pytest.fixture
def held_out() -> VideoBatch:
    return VideoBatch(torch.rand(2, 5, 1, 32, 32, generator=torch.Generator().manual_seed(3)))


class TestRunAblation:
    def test_writes_reports(self, tmp_path: Path, small_train_config: TrainConfig, held_out: VideoBatch, sprites):
        report = run_ablation("full", small_train_config, held_out, tmp_path, horizon=2, sprites=sprites)

        assert [row.variant.name for row in report.rows] == ["full"]
        assert report.rows[0].report.config_digest == small_train_config.digest()
        assert (tmp_path / "full" / FINAL_CHECKPOINT).exists()
        for name in ("ablation.csv", "ablation.txt", "ablation.json"):
            assert (tmp_path / name).exists()

    def test_rerun_reuses_matching_checkpoint(
        self,
        tmp_path: Path,
        small_train_config: TrainConfig,
        held_out: VideoBatch,
        sprites,
        monkeypatch: pytest.MonkeyPatch,
    ):
        first = run_ablation("full", small_train_config, held_out, tmp_path, horizon=2, sprites=sprites)

        def fail(*args, **kwargs):
            raise AssertionError("variant was retrained")

        monkeypatch.setattr(ablation, "train", fail)
        second = run_ablation("full", small_train_config, held_out, tmp_path, horizon=2, sprites=sprites)
        assert second.rows[0].report.aggregates[2]["mse"] == first.rows[0].report.aggregates[2]["mse"]

    def test_rerun_with_changed_seed_refuses_stale_checkpoint(
        self, tmp_path: Path, small_train_config: TrainConfig, held_out: VideoBatch, sprites
    ):
        run_ablation("full", small_train_config, held_out, tmp_path, horizon=2, sprites=sprites)

        changed = small_train_config.with_overrides(seed=7)
        with pytest.raises(ConfigError, match="--retrain"):
            run_ablation("full", changed, held_out, tmp_path, horizon=2, sprites=sprites)
