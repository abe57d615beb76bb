__title__ = "taylornet"

__author__ = "darkstussy"

__copyright__ = f"Copyright (c) 2025 {__author__}"

__version__ = "0.1.0"

from .core import ModelConfig, TrainConfig, VideoBatch
from .exceptions import TaylorNetError
from .model import TaylorNet

__all__ = ("ModelConfig", "TaylorNet", "TaylorNetError", "TrainConfig", "VideoBatch")
