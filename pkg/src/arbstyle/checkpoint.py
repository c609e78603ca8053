"""Single-file little-endian checkpoint container.

Layout::

    b"NSTC" | version u32 | config_len u32 | config UTF-8
    | n_tensors u32 | per tensor: name_len u32, name, dtype u8, rank u32,
      extents u64 * rank, raw payload | crc32 u32 over everything before it
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import IntegrityError, VersionError
from .imageio import atomic_write_bytes
from .optim import AdamState

MAGIC = b"NSTC"
VERSION = 1

_DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8"), 4: np.dtype("u1")}
_TAG_OF = {np.dtype(v).str: k for k, v in _DTYPE_TAGS.items()}


@dataclass(eq=False)
class Checkpoint:
    params: dict
    adam: AdamState | None
    config: RunConfig
    meta: dict = field(default_factory=dict)
    # loss trace rows (step, content, style, total); not serialized
    trace: list = field(default_factory=list, compare=False)

    def __iter__(self):
        return iter((self.params, self.adam, self.config))


def _tensor_table(ckpt):
    table = dict(ckpt.params)
    if ckpt.adam is not None:
        for name, arr in ckpt.adam.m.items():
            table[f"adam/m/{name}"] = arr
        for name, arr in ckpt.adam.v.items():
            table[f"adam/v/{name}"] = arr
        table["adam/step"] = np.array(ckpt.adam.step, dtype=np.int64)
    for name, arr in ckpt.meta.items():
        table[f"meta/{name}"] = arr
    return table


def encode_tensors(config_text, tensors):
    blob = config_text.encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        key = arr.dtype.newbyteorder("<").str
        if key not in _TAG_OF:
            raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
        tag = _TAG_OF[key]
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)) + raw_name)
        parts.append(struct.pack("<BI", tag, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_tensors(data):
    """Return (config_text, ordered tensor dict); verifies magic, CRC and version."""
    if len(data) < 16 or data[:4] != MAGIC:
        raise IntegrityError("not a checkpoint: bad magic")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise IntegrityError("checkpoint CRC mismatch: file is corrupt")
    version, blob_len = struct.unpack_from("<II", data, 4)
    if version > VERSION:
        raise VersionError(f"checkpoint format version {version} is newer than supported {VERSION}")
    pos = 12
    config_text = data[pos:pos + blob_len].decode("utf-8")
    pos += blob_len
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        tag, rank = struct.unpack_from("<BI", data, pos)
        pos += 5
        shape = struct.unpack_from(f"<{rank}Q", data, pos)
        pos += 8 * rank
        dtype = _DTYPE_TAGS.get(tag)
        if dtype is None:
            raise IntegrityError(f"tensor {name!r} has unknown dtype tag {tag}")
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize, offset=pos)
        tensors[name] = arr.reshape(shape).astype(dtype.newbyteorder("="))
        pos += nbytes
    if pos != len(data) - 4:
        raise IntegrityError("trailing bytes after tensor table")
    return config_text, tensors


def encode_checkpoint(ckpt):
    return encode_tensors(ckpt.config.serialize(), _tensor_table(ckpt))


def decode_checkpoint(data):
    text, tensors = decode_tensors(data)
    config = RunConfig.parse(text)
    params, m, v, meta = {}, {}, {}, {}
    step = None
    for name, arr in tensors.items():
        if name == "adam/step":
            step = int(arr)
        elif name.startswith("adam/m/"):
            m[name[7:]] = arr
        elif name.startswith("adam/v/"):
            v[name[7:]] = arr
        elif name.startswith("meta/"):
            meta[name[5:]] = arr
        else:
            params[name] = arr
    adam = None
    if step is not None:
        adam = AdamState(m=m, v=v, step=step, lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.adam_eps)
    return Checkpoint(params=params, adam=adam, config=config, meta=meta)


def save_checkpoint(params, state, config, path, meta=None):
    ckpt = Checkpoint(params=params, adam=state, config=config, meta=meta or {})
    atomic_write_bytes(path, encode_checkpoint(ckpt))


def write_checkpoint(ckpt, path):
    atomic_write_bytes(path, encode_checkpoint(ckpt))


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
