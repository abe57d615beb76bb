"""
Checkpoint archive.

A checkpoint is a single `torch.save` archive holding a dict:

    {"format": "taylornet-checkpoint", "version": 1,
     "model_config": {...ModelConfig fields...},
     "state_dict": {"encoder.0.0.weight": tensor, ...},   # keyed by module path
     "metadata": {...}}                                     # epoch, config digest, ...
"""

import io
from dataclasses import asdict
from pathlib import Path
from typing import Any, Final

import torch

from .core.config import ModelConfig
from .core.serialization import atomic_write_bytes
from .exceptions import CheckpointError
from .model import TaylorNet

CHECKPOINT_FORMAT: Final = "taylornet-checkpoint"
CHECKPOINT_VERSION: Final = 1


def save_checkpoint(path: Path, model: TaylorNet, *, metadata: dict[str, Any] | None = None) -> Path:
    archive = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "metadata": metadata or {},
    }
    buffer = io.BytesIO()
    torch.save(archive, buffer)
    atomic_write_bytes(path, buffer.getvalue())
    return path


def load_checkpoint(path: Path, *, map_location: str | torch.device = "cpu") -> tuple[TaylorNet, dict[str, Any]]:
    """Rebuild a model from a checkpoint archive.

    Returns:
        tuple[TaylorNet, dict[str, Any]]: The model (in eval mode) and the stored metadata.

    Raises:
        CheckpointError: If the file is missing, unreadable or not a taylornet checkpoint.
    """
    try:
        archive = torch.load(path, map_location=map_location, weights_only=True)
    except FileNotFoundError as e:
        raise CheckpointError(f"Checkpoint not found: {path}") from e
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if not isinstance(archive, dict) or archive.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} archive")
    if archive.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {archive.get('version')} in {path}")

    model = TaylorNet(ModelConfig.from_dict(archive["model_config"]))
    try:
        model.load_state_dict(archive["state_dict"])
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint {path} does not match its model config: {e}") from e

    model.eval()
    return model, dict(archive.get("metadata", {}))
