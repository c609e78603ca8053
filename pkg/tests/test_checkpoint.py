import struct
import zlib

import numpy as np
import pytest

from arbstyle.checkpoint import (
    MAGIC,
    Checkpoint,
    decode_checkpoint,
    decode_tensors,
    encode_checkpoint,
    encode_tensors,
    load_checkpoint,
    write_checkpoint,
)
from arbstyle.config import RunConfig
from arbstyle.errors import IntegrityError, VersionError
from arbstyle.optim import AdamState


def sample_checkpoint():
    rng = np.random.default_rng(0)
    params = {"transfer/enc1/w": rng.normal(size=(2, 3, 3, 3)).astype(np.float32),
              "predict/out/b": rng.normal(size=5)}
    adam = AdamState.create(params)
    adam.step = 7
    adam.m["predict/out/b"] = rng.normal(size=5)
    meta = {"style_digests": rng.integers(0, 256, size=(2, 32)).astype(np.uint8),
            "counter": np.array([1, 2, 3], dtype=np.int64)}
    return Checkpoint(params=params, adam=adam, config=RunConfig(seed=3), meta=meta)


def test_round_trip_is_bitwise():
    ckpt = sample_checkpoint()
    data = encode_checkpoint(ckpt)
    back = decode_checkpoint(data)
    assert back.config == ckpt.config
    assert back.adam.step == 7
    for src, dst in ((ckpt.params, back.params), (ckpt.adam.m, back.adam.m), (ckpt.adam.v, back.adam.v),
                     (ckpt.meta, back.meta)):
        assert list(src) == list(dst)
        for k in src:
            assert src[k].dtype == dst[k].dtype and src[k].tobytes() == dst[k].tobytes()
    assert encode_checkpoint(back) == data


def test_file_round_trip(tmp_path):
    ckpt = sample_checkpoint()
    write_checkpoint(ckpt, tmp_path / "a.nstc")
    assert encode_checkpoint(load_checkpoint(tmp_path / "a.nstc")) == encode_checkpoint(ckpt)
    assert [p.name for p in tmp_path.iterdir()] == ["a.nstc"]


def test_header_layout_and_trailing_crc():
    data = encode_tensors("k = 1\n", {"x": np.arange(3, dtype=np.float64)})
    assert data[:4] == MAGIC
    assert struct.unpack_from("<II", data, 4) == (1, 6)
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])
    assert len(data) == 4 + 8 + 6 + 4 + (4 + 1) + (1 + 4 + 8) + 24 + 4


def test_known_bytes_golden(golden):
    data = encode_tensors("seed = 1\n", {"w": np.array([[0.5, -1.0]], dtype=np.float32)})
    golden("tiny_checkpoint.nstc", data)
    assert struct.unpack("<I", data[-4:])[0] == 0x49CD90E6
    text, tensors = decode_tensors(data)
    assert text == "seed = 1\n" and tensors["w"].tolist() == [[0.5, -1.0]]


def test_single_bit_flips_are_detected():
    data = encode_checkpoint(sample_checkpoint())
    rng = np.random.default_rng(1)
    for pos in rng.integers(12, len(data) - 4, size=200):
        bad = bytearray(data)
        bad[pos] ^= 1 << int(rng.integers(8))
        with pytest.raises(IntegrityError):
            decode_checkpoint(bytes(bad))


def test_bad_magic_and_truncation():
    data = encode_checkpoint(sample_checkpoint())
    with pytest.raises(IntegrityError, match="magic"):
        decode_checkpoint(b"XXXX" + data[4:])
    with pytest.raises(IntegrityError):
        decode_checkpoint(data[:-10])


def test_newer_version_is_rejected():
    data = encode_tensors("", {})
    body = bytearray(data[:-4])
    body[4:8] = struct.pack("<I", 2)
    with pytest.raises(VersionError):
        decode_tensors(bytes(body) + struct.pack("<I", zlib.crc32(bytes(body))))
