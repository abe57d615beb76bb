from .config import (
    ABLATION_FLAGS,
    PRESETS,
    DataPreset,
    ModelConfig,
    TrainConfig,
    TrainOverrides,
    get_preset,
    load_config,
)
from .models import BounceSpec, BouncingObject, CheckResult, LossTerms, VideoBatch
from .serialization import read_json, to_json, write_json

__all__ = (
    "ABLATION_FLAGS",
    "PRESETS",
    "BounceSpec",
    "BouncingObject",
    "CheckResult",
    "DataPreset",
    "LossTerms",
    "ModelConfig",
    "TrainConfig",
    "TrainOverrides",
    "VideoBatch",
    "get_preset",
    "load_config",
    "read_json",
    "to_json",
    "write_json",
)
