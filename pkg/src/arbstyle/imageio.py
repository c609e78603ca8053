"""8-bit RGB image files: binary PPM (P6) and non-interlaced PNG.

Images are returned as float64 arrays of shape [1, 3, H, W] with values v/255.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedFormat

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_WHITESPACE = b" \t\r\n\x0b\x0c"


def atomic_write_bytes(path, data):
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# PPM

def _ppm_token(buf, pos):
    """Next header token and the position just past it; skips '#' comments."""
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos:pos + 1] not in _WHITESPACE and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PPM header", start)
    return buf[start:pos], start, pos


def decode_ppm(buf):
    if buf[:2] != b"P6":
        raise FormatError(f"bad PPM magic {buf[:2]!r}, expected b'P6'", 0)
    pos = 2
    values = []
    for label in ("width", "height", "maxval"):
        tok, start, pos = _ppm_token(buf, pos)
        if not tok.isdigit():
            raise FormatError(f"PPM {label} is not a decimal integer: {tok!r}", start)
        values.append((int(tok), start))
    (width, _), (height, hpos), (maxval, mpos) = values
    if maxval != 255:
        raise UnsupportedFormat(f"PPM maxval {maxval} is not supported (only 255)", mpos)
    if width < 1 or height < 1:
        raise FormatError(f"PPM dimensions {width}x{height} must be positive", hpos)
    if pos >= len(buf) or buf[pos:pos + 1] not in _WHITESPACE:
        raise FormatError("missing whitespace after PPM maxval", pos)
    pos += 1
    need = width * height * 3
    if len(buf) - pos < need:
        raise FormatError(f"truncated PPM pixel data: need {need} bytes, have {len(buf) - pos}", len(buf))
    pixels = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos)
    return pixels.reshape(height, width, 3)


def encode_ppm(rgb):
    h, w, _ = rgb.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


# ---------------------------------------------------------------------------
# PNG

def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = np.abs(p - a), np.abs(p - b), np.abs(p - c)
    return np.where((pa <= pb) & (pa <= pc), a, np.where(pb <= pc, b, c))


def _unfilter(raw, width, height, bpp, offset):
    stride = width * bpp
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int32)
    pos = 0
    for y in range(height):
        if pos + 1 + stride > len(raw):
            raise FormatError("truncated PNG image data", offset)
        ftype = raw[pos]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).astype(np.int32)
        pos += 1 + stride
        if ftype == 0:
            cur = line
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        elif ftype in (1, 3, 4):
            # left-neighbour dependency makes these sequential over pixels
            cur = np.zeros(stride, dtype=np.int32)
            for x in range(stride):
                a = cur[x - bpp] if x >= bpp else 0
                if ftype == 1:
                    pred = a
                elif ftype == 3:
                    pred = (a + prev[x]) >> 1
                else:
                    c = prev[x - bpp] if x >= bpp else 0
                    pred = int(_paeth(np.int32(a), np.int32(prev[x]), np.int32(c)))
                cur[x] = (line[x] + pred) & 0xFF
        else:
            raise FormatError(f"unknown PNG filter type {ftype} on row {y}", offset)
        out[y] = cur
        prev = cur
    return out


def decode_png(buf):
    if buf[:8] != PNG_SIGNATURE:
        raise FormatError("bad PNG signature", 0)
    pos = 8
    header = None
    idat = []
    idat_offset = None
    while True:
        if pos + 8 > len(buf):
            raise FormatError("truncated PNG chunk header", pos)
        length, ctype = struct.unpack(">I4s", buf[pos:pos + 8])
        end = pos + 8 + length + 4
        if end > len(buf):
            raise FormatError(f"truncated PNG chunk {ctype!r}", pos)
        body = buf[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack(">I", buf[pos + 8 + length:end])
        if zlib.crc32(ctype + body) != crc:
            raise FormatError(f"CRC mismatch in PNG chunk {ctype!r}", pos)
        if ctype == b"IHDR":
            width, height, depth, color, comp, filt, interlace = struct.unpack(">IIBBBBB", body)
            if depth != 8 or color not in (2, 6):
                raise UnsupportedFormat(
                    f"only 8-bit RGB/RGBA PNG is supported (depth {depth}, color type {color})", pos)
            if interlace != 0 or comp != 0 or filt != 0:
                raise UnsupportedFormat("interlaced or non-standard PNG is not supported", pos)
            header = (width, height, 3 if color == 2 else 4)
        elif ctype == b"IDAT":
            if idat_offset is None:
                idat_offset = pos
            idat.append(body)
        elif ctype == b"IEND":
            break
        pos = end
    if header is None or not idat:
        raise FormatError("PNG is missing IHDR or IDAT", pos)
    width, height, bpp = header
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise FormatError(f"corrupt PNG image data: {exc}", idat_offset) from exc
    pixels = _unfilter(raw, width, height, bpp, idat_offset).reshape(height, width, bpp)
    return pixels[:, :, :3]


def _chunk(ctype, body):
    return struct.pack(">I", len(body)) + ctype + body + struct.pack(">I", zlib.crc32(ctype + body))


def encode_png(rgb):
    h, w, _ = rgb.shape
    rows = np.concatenate([np.zeros((h, 1), dtype=np.uint8),
                           np.ascontiguousarray(rgb, dtype=np.uint8).reshape(h, w * 3)], axis=1)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (PNG_SIGNATURE + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(rows.tobytes(), 9)) + _chunk(b"IEND", b""))


# ---------------------------------------------------------------------------

def decode_image(buf):
    if buf[:8] == PNG_SIGNATURE:
        rgb = decode_png(buf)
    else:
        rgb = decode_ppm(buf)
    return (rgb.astype(np.float64) / 255.0).transpose(2, 0, 1)[None]


def load_image(path):
    """Read a PPM or PNG file as a [1, 3, H, W] float64 array in [0, 1]."""
    data = Path(path).read_bytes()
    try:
        return decode_image(data)
    except FormatError as exc:
        raise type(exc)(f"{path}: {exc.detail}", exc.offset) from None


def to_uint8(image):
    arr = np.asarray(getattr(image, "data", image), dtype=np.float64)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ValueError(f"can only save a single image, got batch {arr.shape[0]}")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected a [1,3,H,W] or [3,H,W] image, got {arr.shape}")
    return np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def encode_image(image, fmt):
    rgb = to_uint8(image)
    if fmt == "ppm":
        return encode_ppm(rgb)
    if fmt == "png":
        return encode_png(rgb)
    raise ValueError(f"unknown image format {fmt!r}")


def save_image(image, path):
    path = Path(path)
    fmt = path.suffix.lower().lstrip(".")
    if fmt not in ("ppm", "png"):
        raise ValueError(f"{path}: extension must be .ppm or .png")
    atomic_write_bytes(path, encode_image(image, fmt))
