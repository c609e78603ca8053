"""Image corpora: loading directories of PPM/PNG files and seeded synthetic sets."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageio import encode_image, load_image, to_uint8
from .imageio import atomic_write_bytes

IMAGE_SUFFIXES = (".ppm", ".png")


@dataclass
class Sample:
    name: str
    image: np.ndarray  # [1, 3, H, W] in [0, 1]

    @property
    def digest(self):
        return image_digest(self.image)


def image_digest(image):
    """SHA-256 of the 8-bit quantized pixels; identifies an image across corpora."""
    return hashlib.sha256(to_uint8(image).tobytes()).hexdigest()


def resize_bilinear(image, height, width):
    """Half-pixel-centred bilinear resize of [..., H, W] arrays."""
    H, W = image.shape[-2:]
    if (H, W) == (height, width):
        return image.copy()

    def coords(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = coords(height, H)
    x0, x1, wx = coords(width, W)
    rows = image[..., y0, :] * (1 - wy)[:, None] + image[..., y1, :] * wy[:, None]
    return rows[..., x0] * (1 - wx) + rows[..., x1] * wx


def load_corpus(path, size=None):
    """All images in a directory (sorted by name), optionally resized to size x size."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"corpus directory has no .ppm/.png images: {root}")
    samples = []
    for f in files:
        try:
            img = load_image(f)
        except OSError as exc:
            raise OSError(f"failed to read corpus image {f}: {exc}") from exc
        if size is not None:
            img = resize_bilinear(img, size, size)
        samples.append(Sample(f.stem, img))
    return samples


def write_corpus(directory, samples, fmt="ppm"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in samples:
        atomic_write_bytes(directory / f"{s.name}.{fmt}", encode_image(s.image, fmt))


# ---------------------------------------------------------------------------
# synthetic corpora

def _grid(size):
    y, x = np.mgrid[0:size, 0:size] / size
    return y, x


def _palette(rng, k):
    return rng.uniform(0.05, 0.95, size=(k, 3))


def _colorize(field, colors):
    # field in [0, 1] blended linearly across the palette
    k = len(colors)
    pos = np.clip(field, 0, 1) * (k - 1)
    lo = np.floor(pos).astype(int).clip(0, k - 2) if k > 1 else np.zeros_like(pos, dtype=int)
    t = pos - lo
    if k == 1:
        return np.broadcast_to(colors[0][:, None, None], (3,) + field.shape).copy()
    c0 = colors[lo].transpose(2, 0, 1)
    c1 = colors[lo + 1].transpose(2, 0, 1)
    return c0 * (1 - t) + c1 * t


def _smooth_noise(rng, size, cells):
    coarse = rng.random((cells, cells))
    return resize_bilinear(coarse[None], size, size)[0]


def synthetic_style(rng, size):
    """One procedural texture: stripes, checks, blobs or dots over a random palette."""
    y, x = _grid(size)
    kind = rng.integers(0, 4)
    colors = _palette(rng, int(rng.integers(2, 4)))
    if kind == 0:
        angle = rng.uniform(0, np.pi)
        freq = rng.uniform(2, 8)
        field = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (x * np.cos(angle) + y * np.sin(angle)))
    elif kind == 1:
        freq = int(rng.integers(2, 7))
        field = ((np.floor(x * freq) + np.floor(y * freq)) % 2).astype(float)
    elif kind == 2:
        field = _smooth_noise(rng, size, int(rng.integers(3, 8)))
        field = (field - field.min()) / (np.ptp(field) + 1e-12)
    else:
        freq = rng.uniform(3, 7)
        field = (np.sin(2 * np.pi * freq * x) * np.sin(2 * np.pi * freq * y) > 0.3).astype(float)
    img = _colorize(field, colors) + rng.normal(0, 0.02, size=(3, size, size))
    return np.clip(img, 0, 1)[None]


def synthetic_content(rng, size):
    """Photograph-like image: smooth background gradient plus a few flat shapes."""
    y, x = _grid(size)
    top, bottom = _palette(rng, 2)
    img = top[:, None, None] * (1 - y) + bottom[:, None, None] * y
    for _ in range(int(rng.integers(2, 5))):
        color = _palette(rng, 1)[0][:, None, None]
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        r = rng.uniform(0.1, 0.3)
        if rng.random() < 0.5:
            mask = (y - cy) ** 2 + (x - cx) ** 2 < r * r
        else:
            mask = (np.abs(y - cy) < r) & (np.abs(x - cx) < r * 0.7)
        img = np.where(mask[None], color, img)
    return np.clip(img, 0, 1)[None]


def synthetic_corpus(kind, n, size, seed, prefix=None):
    """``n`` seeded synthetic samples; kind is 'style' or 'content'."""
    make = {"style": synthetic_style, "content": synthetic_content}[kind]
    rng = np.random.default_rng(seed)
    prefix = prefix or kind
    out = []
    for i in range(n):
        # quantize so the in-memory corpus equals what a file round trip yields
        img = np.round(make(rng, size) * 255) / 255
        out.append(Sample(f"{prefix}_{i:03d}", img))
    return out
