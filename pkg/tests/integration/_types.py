from pathlib import Path
from typing import NamedTuple, TypedDict

from taylornet.core.config import TrainConfig
from taylornet.training import TrainResult


class RunConfig(TypedDict):
    device: str
    epochs: int
    test_size: int
    repro_epochs: int


class TrainedRun(NamedTuple):
    config: TrainConfig
    out_dir: Path
    result: TrainResult
