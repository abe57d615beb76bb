import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from taylornet.core.serialization import atomic_write_bytes, read_json, to_json, write_json


@dataclass(slots=True)
class _Row:
    name: str
    value: float


def test_numeric_and_container_values():
    payload = {
        "path": Path("runs") / "tiny",
        "int": np.int64(3),
        "float": np.float32(0.5),
        "flag": np.bool_(True),
        "array": np.arange(3),
        "tensor": torch.tensor([[1.0, 2.0]]),
        "row": _Row("mse", 0.25),
        "orders": {3, 1, 2},
    }
    decoded = json.loads(to_json(payload))

    assert decoded == {
        "path": str(Path("runs") / "tiny"),
        "int": 3,
        "float": 0.5,
        "flag": True,
        "array": [0, 1, 2],
        "tensor": [[1.0, 2.0]],
        "row": {"name": "mse", "value": 0.25},
        "orders": [1, 2, 3],
    }


def test_unknown_values_fall_back_to_str():
    assert json.loads(to_json({"device": torch.device("cpu")})) == {"device": "cpu"}


def test_keys_are_sorted():
    assert to_json({"b": 1, "a": 2}, indent=None) == '{"a": 2, "b": 1}'


def test_write_and_read(tmp_path: Path):
    path = tmp_path / "report.json"
    write_json(path, {"horizon": 10})
    assert read_json(path) == {"horizon": 10}


def test_atomic_write_leaves_no_temporaries(tmp_path: Path):
    path = tmp_path / "nested" / "blob.bin"
    atomic_write_bytes(path, b"abc")
    atomic_write_bytes(path, b"xyz")
    assert path.read_bytes() == b"xyz"
    assert [p.name for p in path.parent.iterdir()] == ["blob.bin"]
