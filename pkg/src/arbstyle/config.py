"""Flat ``key = value`` run configuration.

Values default to the desk-scale architecture and the optimizer constants of
the original training tables (Adam 0.001 / 0.9 / 0.999, Gaussian init 0.01).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

# Reference values of the full-scale setup, kept for documentation.
FULL_SCALE_BUDGET = 4_000_000
FULL_SCALE_BATCH_SIZE = 8


@dataclass(frozen=True)
class RunConfig:
    model: str = "joint"
    seed: int = 0
    precision: str = "float32"
    image_size: int = 32
    style_size: int = 32
    # transfer network
    transfer_channels: tuple = (8, 16, 32)
    residual_blocks: int = 2
    outer_kernel: int = 9
    inner_kernel: int = 3
    transfer_strides: tuple = (1, 2, 2)
    upsample: tuple = (2, 2)
    # prediction network
    predict_channels: tuple = (8, 16, 32)
    predict_kernel: int = 3
    predict_stride: int = 2
    bottleneck: int = 16
    # stand-in loss network
    loss_channels: tuple = (8, 16, 16, 32)
    loss_kernels: tuple = (3, 3, 3, 3)
    loss_strides: tuple = (1, 2, 1, 2)
    style_layers: tuple = (1, 2, 3)
    content_layers: tuple = (4,)
    loss_init_std: float = 0.3
    loss_seed: int = 0
    # optimization
    init_std: float = 0.01
    lambda_s: float = 10.0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    budget: int = 2000
    log_every: int = 50
    content_corpus: str = ""
    style_corpus: str = ""
    # style augmentation
    augment: bool = True
    flip_prob: float = 0.5
    rescale_min: float = 0.8
    rescale_max: float = 1.2
    hue_max: float = 0.1
    contrast_min: float = 0.8
    contrast_max: float = 1.2
    # direct pixel optimization baseline
    optimize_steps: int = 200
    optimize_lr: float = 0.05
    # studies
    photographs: int = 2
    tsne_perplexity: float = 15.0
    tsne_iters: int = 500
    grid_n: int = 5
    k_std: float = 4.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in ("joint", "adain"):
            raise ConfigError(f"model must be 'joint' or 'adain', got {self.model!r}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lambda_s > 0:
            raise ConfigError(f"lambda_s must be > 0, got {self.lambda_s}")

    @property
    def dtype(self):
        return np.dtype(self.precision)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # -- derived component configs ---------------------------------------
    def transfer_config(self):
        from .networks import TransferNetConfig

        return TransferNetConfig(channels=self.transfer_channels, residual_blocks=self.residual_blocks,
                                 outer_kernel=self.outer_kernel, inner_kernel=self.inner_kernel,
                                 strides=self.transfer_strides, upsample=self.upsample)

    def prediction_config(self):
        from .networks import PredictionNetConfig, embedding_dim

        return PredictionNetConfig(channels=self.predict_channels, kernel=self.predict_kernel,
                                   stride=self.predict_stride, bottleneck=self.bottleneck,
                                   embedding_dim=embedding_dim(self.transfer_config()))

    def lossnet_config(self):
        from .losses import LossNetConfig

        return LossNetConfig(channels=self.loss_channels, kernels=self.loss_kernels,
                             strides=self.loss_strides, style_layers=self.style_layers,
                             content_layers=self.content_layers, init_std=self.loss_init_std,
                             seed=self.loss_seed)

    def augment_options(self):
        from .training import AugmentOptions

        on = self.augment
        return AugmentOptions(flip=on, rescale=on, hue=on, contrast=on, flip_prob=self.flip_prob,
                              rescale_range=(self.rescale_min, self.rescale_max),
                              hue_max=self.hue_max,
                              contrast_range=(self.contrast_min, self.contrast_max))

    # -- text form -------------------------------------------------------
    def serialize(self):
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text):
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if " #" in line:
                line = line.split(" #", 1)[0].rstrip()
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {raw!r}", lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in kinds:
                raise ConfigError(f"unknown key {key!r}", lineno)
            try:
                values[key] = _parse_value(kinds[key], value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
        try:
            return cls(**values)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(kind, text):
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "tuple":
        return tuple(int(x) for x in text.split(",") if x.strip()) if text else ()
    return text


def load_config(path):
    return RunConfig.parse(Path(path).read_text(encoding="utf-8"))


def save_config(config, path):
    from .imageio import atomic_write_bytes

    atomic_write_bytes(path, config.serialize().encode("utf-8"))
