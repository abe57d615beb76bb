import os

import pytest

from taylornet.core.config import TrainConfig
from taylornet.core.models import VideoBatch
from taylornet.data.generators import generate_moving_digits
from taylornet.data.sprites import load_digit_sprites
from taylornet.training import train

from ._types import RunConfig, TrainedRun

TAYLORNET_DEVICE = os.getenv("TAYLORNET_DEVICE", "cpu")
TAYLORNET_TINY_EPOCHS = int(os.getenv("TAYLORNET_TINY_EPOCHS", "30"))
TAYLORNET_TEST_SIZE = int(os.getenv("TAYLORNET_TEST_SIZE", "256"))
TAYLORNET_REPRO_EPOCHS = int(os.getenv("TAYLORNET_REPRO_EPOCHS", "2"))
TEST_SEED = 10_000


@pytest.fixture(scope="session")
def run_config() -> RunConfig:
    return {
        "device": TAYLORNET_DEVICE,
        "epochs": TAYLORNET_TINY_EPOCHS,
        "test_size": TAYLORNET_TEST_SIZE,
        "repro_epochs": TAYLORNET_REPRO_EPOCHS,
    }


@pytest.fixture(scope="session")
def tiny_run(run_config: RunConfig, tmp_path_factory: pytest.TempPathFactory) -> TrainedRun:
    """The seeded tiny-preset training run shared by the rollout tests."""
    config = TrainConfig.for_preset("tiny", epochs=run_config["epochs"], device=run_config["device"], seed=0)
    out_dir = tmp_path_factory.mktemp("tiny")
    return TrainedRun(config, out_dir, train(config, out_dir))


@pytest.fixture(scope="session")
def held_out(run_config: RunConfig) -> VideoBatch:
    """Held-out 10 -> 90 sequences, seeded apart from every training epoch."""
    config = TrainConfig.for_preset("tiny")
    sprites = load_digit_sprites(size=config.data_preset.sprite_size)
    return generate_moving_digits(
        sprites, config.data_preset, batch_size=run_config["test_size"], length=100, seed=TEST_SEED
    )
