import json
from pathlib import Path

import numpy as np
import pytest
import torch

from taylornet.data.container import (
    BinaryReader,
    decode_container,
    encode_container,
    import_moving_mnist,
    load_video_batch,
    read_container,
    sidecar_path,
    write_container,
)
from taylornet.exceptions import ContainerError


class TestBinaryReader:
    def test_sequential_reads(self):
        reader = BinaryReader(b"\x01\x02\x00\x00\x00abc")
        assert reader.read_uint8() == 1
        assert reader.read_uint32() == 2
        assert reader.pos == 5
        assert reader.remaining == 3
        assert reader.read_bytes(3) == b"abc"

    def test_big_endian(self):
        assert BinaryReader(b"\x00\x00\x01\x00", byteorder=">").read_uint32() == 256

    def test_end_of_data(self):
        with pytest.raises(ContainerError):
            BinaryReader(b"\x00\x01").read_uint32()


class TestEncoding:
    def test_header_layout(self):
        payload = encode_container(np.zeros((2, 3), dtype=np.uint8))
        assert payload[:4] == b"TNVB"
        assert payload[4:8] == bytes([1, 1, 2, 0])
        assert len(payload) == 8 + 2 * 4 + 6

    @pytest.mark.parametrize("dtype", [np.uint8, np.float32, np.float64])
    def test_decode_restores_array(self, dtype):
        frames = (np.random.default_rng(0).random((2, 3, 1, 4, 4)) * 200).astype(dtype)
        decoded = decode_container(encode_container(frames))
        assert decoded.dtype == np.dtype(dtype)
        assert np.array_equal(decoded, frames)

    def test_unsupported_dtype(self):
        with pytest.raises(ContainerError, match="Unsupported"):
            encode_container(np.zeros(3, dtype=np.int64))

    def test_bad_magic(self):
        with pytest.raises(ContainerError, match="Not a TNVB"):
            decode_container(b"XXXX" + bytes(8))

    def test_unknown_version(self):
        payload = bytearray(encode_container(np.zeros(2, dtype=np.uint8)))
        payload[4] = 9
        with pytest.raises(ContainerError, match="version"):
            decode_container(bytes(payload))

    def test_size_mismatch(self):
        payload = encode_container(np.zeros((2, 2), dtype=np.float32))
        with pytest.raises(ContainerError, match="does not match"):
            decode_container(payload[:-1])


class TestFiles:
    def test_write_and_read_with_sidecar(self, tmp_path: Path):
        frames = torch.rand(2, 4, 1, 8, 8)
        path = write_container(tmp_path / "seq.tnvb", frames, {"seed": 3})

        array, metadata = read_container(path)
        assert np.array_equal(array, frames.numpy())
        assert metadata["seed"] == 3
        assert metadata["shape"] == [2, 4, 1, 8, 8]
        assert sidecar_path(path).name == "seq.tnvb.json"
        assert not list(tmp_path.glob(".*"))

    def test_load_uint8_batch(self, tmp_path: Path):
        frames = np.full((1, 2, 1, 4, 4), 255, dtype=np.uint8)
        batch = load_video_batch(write_container(tmp_path / "seq.tnvb", frames))
        assert batch.frames.dtype == torch.float32
        assert torch.equal(batch.frames, torch.ones(1, 2, 1, 4, 4))

    def test_load_requires_five_dims(self, tmp_path: Path):
        path = write_container(tmp_path / "seq.tnvb", np.zeros((2, 4, 4), dtype=np.float32))
        with pytest.raises(ContainerError, match="expected"):
            load_video_batch(path)

    def test_sidecar_shape_mismatch(self, tmp_path: Path):
        path = write_container(tmp_path / "seq.tnvb", np.zeros((1, 2, 1, 4, 4), dtype=np.float32))
        sidecar_path(path).write_text(json.dumps({"shape": [9]}), encoding="utf-8")
        with pytest.raises(ContainerError, match="Sidecar"):
            read_container(path)

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(ContainerError, match="Cannot read"):
            read_container(tmp_path / "missing.tnvb")


class TestMovingMnistImport:
    def test_time_major_to_sequence_major(self, tmp_path: Path):
        source = tmp_path / "mnist_test_seq.npy"
        raw = np.random.default_rng(0).integers(0, 256, size=(20, 3, 64, 64), dtype=np.uint8)
        np.save(source, raw)

        batch = load_video_batch(import_moving_mnist(source, tmp_path / "mm.tnvb", limit=2))
        assert batch.shape == (2, 20, 1, 64, 64)
        expected = torch.from_numpy(raw[5, 1].astype(np.float32)) / 255.0
        assert torch.equal(batch.frames[1, 5, 0], expected)

    def test_wrong_layout(self, tmp_path: Path):
        source = tmp_path / "bad.npy"
        np.save(source, np.zeros((20, 64, 64), dtype=np.uint8))
        with pytest.raises(ContainerError, match="Expected"):
            import_moving_mnist(source, tmp_path / "mm.tnvb")
