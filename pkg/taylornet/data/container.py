"""
Sequence container (`.tnvb`).

Layout (little-endian):

    magic    4 bytes  b"TNVB"
    version  uint8    1
    dtype    uint8    1 = uint8, 2 = float32, 3 = float64
    ndim     uint8
    reserved uint8    0
    shape    ndim x uint32
    data     raw C-order array

Frames are stored as (N, T, C, H, W). uint8 frames map to [0, 1] by dividing by 255.
Metadata lives next to the file in a JSON sidecar `<name>.tnvb.json`.
"""

import logging
import struct
from pathlib import Path
from typing import Any, Final, Literal

import numpy as np
import torch

from ..core.models import VideoBatch
from ..core.serialization import atomic_write_bytes, read_json, to_json
from ..exceptions import ContainerError

logger = logging.getLogger(__name__)

MAGIC: Final = b"TNVB"
VERSION: Final = 1
_DTYPE_CODES: Final[dict[int, np.dtype]] = {1: np.dtype("u1"), 2: np.dtype("<f4"), 3: np.dtype("<f8")}
_CODES_BY_DTYPE: Final = {dtype: code for code, dtype in _DTYPE_CODES.items()}


class BinaryReader:
    """Sequential reader over a byte buffer."""

    def __init__(self, data: bytes | memoryview, *, byteorder: Literal["<", ">"] = "<"):
        self._data = data if isinstance(data, memoryview) else memoryview(data)
        self._pos = 0
        self._order = byteorder

    @property
    def pos(self) -> int:
        return self._pos

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def _read(self, size: int) -> memoryview:
        end = self._pos + size
        if end > len(self._data):
            raise ContainerError("Unexpected end of data")
        chunk = self._data[self._pos : end]
        self._pos = end
        return chunk

    def read_uint8(self) -> int:
        return int(self._read(1)[0])

    def read_uint32(self) -> int:
        return struct.unpack(f"{self._order}I", self._read(4))[0]

    def read_bytes(self, size: int) -> bytes:
        return self._read(size).tobytes()


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def encode_container(frames: np.ndarray) -> bytes:
    dtype = frames.dtype.newbyteorder("<") if frames.dtype.itemsize > 1 else frames.dtype
    code = _CODES_BY_DTYPE.get(np.dtype(dtype))
    if code is None:
        raise ContainerError(f"Unsupported container dtype {frames.dtype}")
    if frames.ndim > 255:
        raise ContainerError("Too many dimensions")

    header = MAGIC + struct.pack("<BBBB", VERSION, code, frames.ndim, 0)
    header += struct.pack(f"<{frames.ndim}I", *frames.shape)
    return header + np.ascontiguousarray(frames, dtype=dtype).tobytes()


def decode_container(payload: bytes) -> np.ndarray:
    reader = BinaryReader(payload)
    if reader.read_bytes(4) != MAGIC:
        raise ContainerError("Not a TNVB container")

    version, code, ndim = reader.read_uint8(), reader.read_uint8(), reader.read_uint8()
    reader.read_uint8()
    if version != VERSION:
        raise ContainerError(f"Unsupported container version {version}")
    if code not in _DTYPE_CODES:
        raise ContainerError(f"Unknown dtype code {code}")

    dtype = _DTYPE_CODES[code]
    shape = tuple(reader.read_uint32() for _ in range(ndim))
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if reader.remaining != expected:
        raise ContainerError(f"Data size {reader.remaining} does not match shape {shape} ({expected} bytes)")
    return np.frombuffer(reader.read_bytes(expected), dtype=dtype).reshape(shape)


def write_container(path: Path, frames: np.ndarray | torch.Tensor, metadata: dict[str, Any] | None = None) -> Path:
    """Write frames and their JSON sidecar atomically."""
    array = frames.detach().cpu().numpy() if isinstance(frames, torch.Tensor) else np.asarray(frames)
    atomic_write_bytes(path, encode_container(array))

    sidecar = {"shape": list(array.shape), "dtype": str(array.dtype), **(metadata or {})}
    atomic_write_bytes(sidecar_path(path), (to_json(sidecar) + "\n").encode("utf-8"))
    return path


def read_container(path: Path) -> tuple[np.ndarray, dict[str, Any]]:
    """Read a container and its sidecar (empty metadata when the sidecar is absent)."""
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise ContainerError(f"Cannot read container {path}: {e}") from e

    frames = decode_container(payload)
    meta_path = sidecar_path(path)
    metadata = read_json(meta_path) if meta_path.exists() else {}
    if metadata.get("shape", list(frames.shape)) != list(frames.shape):
        raise ContainerError(f"Sidecar shape {metadata['shape']} does not match {path} shape {list(frames.shape)}")
    return frames, metadata


def load_video_batch(path: Path) -> VideoBatch:
    """Read an (N, T, C, H, W) container as a float32 VideoBatch in [0, 1]."""
    frames, metadata = read_container(path)
    if frames.ndim != 5:
        raise ContainerError(f"{path} holds a {frames.ndim}-D array, expected (N, T, C, H, W)")

    tensor = torch.from_numpy(frames.astype(np.float32))
    if frames.dtype == np.uint8:
        tensor /= 255.0
    try:
        return VideoBatch(tensor, seed=metadata.get("seed"), metadata=metadata)
    except ValueError as e:
        raise ContainerError(f"{path}: {e}") from e


def import_moving_mnist(source: Path, out_path: Path, *, limit: int | None = None) -> Path:
    """
    Convert the public Moving-MNIST test array to a container.

    The source `.npy` holds uint8 frames laid out as (20, N, 64, 64), time first;
    the container stores them as (N, 20, 1, 64, 64).

    Raises:
        ContainerError: If the array does not follow that layout.
    """
    try:
        array = np.load(source, mmap_mode="r", allow_pickle=False)
    except (OSError, ValueError) as e:
        raise ContainerError(f"Cannot read Moving-MNIST array {source}: {e}") from e

    if array.ndim != 4 or array.dtype != np.uint8:
        raise ContainerError(f"Expected a (T, N, H, W) uint8 array in {source}, got {array.dtype} {array.shape}")

    frames = np.ascontiguousarray(np.swapaxes(array, 0, 1)[:limit, :, None])
    logger.info("Importing %d sequences of %d frames from %s", frames.shape[0], frames.shape[1], source)
    return write_container(out_path, frames, {"source": source.name, "layout": "N,T,C,H,W"})
