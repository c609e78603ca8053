"""Style transfer network T(c, S) and style prediction network P(s).

Parameters live in a flat ``dict[str, ndarray]`` keyed ``transfer/<layer>/w``
and ``predict/<layer>/{w,b}``.  Forward functions take the same dict with
Tensor values so that gradients flow into whichever entries require them.

Every transfer convolution is followed by conditional instance normalization
whose (gamma, beta) come from the style embedding, sliced in depth order.
Those convolutions carry no bias: the normalization would cancel it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ShapeError
from .normalization import EPS, NormParams, conditional_instance_norm
from .tensor import Tensor, concat, conv2d, linear, no_grad, relu, sigmoid, spatial_mean, upsample_nearest


@dataclass(frozen=True)
class ConvSpec:
    name: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    upsample: int = 1
    activation: str = "relu"
    # "open" saves the block input, "close" adds it back after this layer
    residual: str = ""


@dataclass(frozen=True)
class TransferNetConfig:
    channels: tuple = (8, 16, 32)
    residual_blocks: int = 2
    outer_kernel: int = 9
    inner_kernel: int = 3
    strides: tuple = (1, 2, 2)
    upsample: tuple = (2, 2)

    def __post_init__(self):
        if not self.channels:
            raise InvalidArgument("transfer network needs at least one encoder convolution")
        if len(self.strides) != len(self.channels):
            raise InvalidArgument("one stride per encoder convolution is required")
        if len(self.upsample) != len(self.channels) - 1:
            raise InvalidArgument("need one upsampling stage per encoder convolution after the first")
        if math.prod(self.strides) != math.prod(self.upsample):
            raise InvalidArgument(
                f"total downsampling {math.prod(self.strides)} != total upsampling {math.prod(self.upsample)}"
            )
        if self.residual_blocks < 0:
            raise InvalidArgument("residual_blocks must be >= 0")

    @property
    def total_stride(self):
        return math.prod(self.strides)

    def conv_layers(self):
        layers = []
        cin = 3
        for i, (cout, s) in enumerate(zip(self.channels, self.strides), start=1):
            k = self.outer_kernel if i == 1 else self.inner_kernel
            layers.append(ConvSpec(f"enc{i}", cin, cout, k, stride=s))
            cin = cout
        for b in range(1, self.residual_blocks + 1):
            layers.append(ConvSpec(f"res{b}a", cin, cin, self.inner_kernel, residual="open"))
            layers.append(ConvSpec(f"res{b}b", cin, cin, self.inner_kernel, activation="linear",
                                   residual="close"))
        for u, (factor, cout) in enumerate(zip(self.upsample, reversed(self.channels[:-1])), start=1):
            layers.append(ConvSpec(f"up{u}", cin, cout, self.inner_kernel, upsample=factor))
            cin = cout
        layers.append(ConvSpec("out", cin, 3, self.outer_kernel, activation="sigmoid"))
        return layers


DESK_TRANSFER = TransferNetConfig()
FULL_TRANSFER = TransferNetConfig(channels=(32, 64, 128), residual_blocks=5)


@dataclass(frozen=True)
class PredictionNetConfig:
    channels: tuple = (8, 16, 32)
    kernel: int = 3
    stride: int = 2
    bottleneck: int = 16
    embedding_dim: int = 422

    def __post_init__(self):
        if not self.channels:
            raise InvalidArgument("prediction backbone needs at least one convolution")
        if self.bottleneck >= self.embedding_dim:
            raise InvalidArgument(
                f"bottleneck ({self.bottleneck}) must be smaller than the embedding ({self.embedding_dim})"
            )

    @property
    def pooled_dim(self):
        return self.channels[-1]


FULL_PREDICTION = PredictionNetConfig(channels=(64, 288, 768), bottleneck=100,
                                      embedding_dim=3206)


@dataclass
class StyleEmbedding:
    """Concatenated per-layer (gamma, beta) blocks; ``values`` is [D] or [N, D]."""

    values: Tensor

    @property
    def dim(self):
        return self.values.shape[-1]

    def numpy(self):
        return self.values.data


def _layers_of(config):
    if isinstance(config, TransferNetConfig):
        return config.conv_layers()
    return list(config)


def embedding_dim(config):
    """2 x total output channels of the normalized convolutions.

    Accepts a :class:`TransferNetConfig` or any sequence of :class:`ConvSpec`.
    """
    return 2 * sum(layer.out_channels for layer in _layers_of(config))


def _as_embedding_tensor(S):
    return S.values if isinstance(S, StyleEmbedding) else S


def slice_embedding(S, config):
    """Split S into per-layer NormParams, gamma block first then beta."""
    values = _as_embedding_tensor(S)
    layers = _layers_of(config)
    expected = embedding_dim(layers)
    if values.shape[-1] != expected:
        raise InvalidArgument(
            f"style embedding has dimension {values.shape[-1]}, network expects {expected}"
        )
    out, offset = [], 0
    for layer in layers:
        c = layer.out_channels
        gamma = values[..., offset:offset + c]
        beta = values[..., offset + c:offset + 2 * c]
        out.append(NormParams(gamma=gamma, beta=beta, layer_id=layer.name))
        offset += 2 * c
    return out


def concatenate_embedding(norm_params):
    parts = []
    for p in norm_params:
        parts.extend([p.gamma, p.beta])
    return StyleEmbedding(concat(parts, axis=-1))


def identity_norm_embedding(config):
    """gamma = 1, beta = 0 for every normalized layer."""
    vec = []
    for layer in _layers_of(config):
        vec.extend([np.ones(layer.out_channels), np.zeros(layer.out_channels)])
    return np.concatenate(vec)


def init_transfer_params(config, rng, std=0.01, dtype=np.float64):
    params = {}
    for layer in config.conv_layers():
        shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
        params[f"transfer/{layer.name}/w"] = rng.normal(0.0, std, size=shape).astype(dtype)
    return params


def init_prediction_params(config, rng, std=0.01, dtype=np.float64, transfer=None):
    """Gaussian weights, zero biases; the output bias starts at the identity norm
    (gamma = 1, beta = 0) when ``transfer`` is given."""
    params = {}
    cin = 3
    for i, cout in enumerate(config.channels, start=1):
        params[f"predict/conv{i}/w"] = rng.normal(0.0, std, size=(cout, cin, config.kernel, config.kernel))
        params[f"predict/conv{i}/b"] = np.zeros(cout)
        cin = cout
    params["predict/bottleneck/w"] = rng.normal(0.0, std, size=(config.bottleneck, config.pooled_dim))
    params["predict/bottleneck/b"] = np.zeros(config.bottleneck)
    params["predict/out/w"] = rng.normal(0.0, std, size=(config.embedding_dim, config.bottleneck))
    if transfer is not None:
        bias = identity_norm_embedding(transfer)
        if bias.size != config.embedding_dim:
            raise InvalidArgument("prediction output dim does not match the transfer network embedding")
    else:
        bias = np.zeros(config.embedding_dim)
    params["predict/out/b"] = bias
    return {k: v.astype(dtype) for k, v in params.items()}


def _check_image(img, what):
    if img.ndim != 4 or img.shape[1] != 3:
        raise ShapeError(f"{what} must be [N,3,H,W], got {img.shape}")


def transfer_forward(content, S, params, config, eps=EPS):
    """Render ``content`` under the style embedding ``S``; output lies in (0, 1)."""
    _check_image(content, "content image")
    H, W = content.shape[2:]
    stride = config.total_stride
    if H % stride or W % stride:
        raise ShapeError(f"content dims {H}x{W} must be divisible by the total stride {stride}")
    values = _as_embedding_tensor(S)
    expected = embedding_dim(config)
    if values.shape[-1] != expected:
        raise InvalidArgument(
            f"style embedding dimension mismatch: expected {expected}, got {values.shape[-1]}"
        )
    if values.ndim == 2 and values.shape[0] not in (1, content.shape[0]):
        raise ShapeError(f"embedding batch {values.shape[0]} vs content batch {content.shape[0]}")
    norms = {p.layer_id: p for p in slice_embedding(values, config)}
    if values.ndim == 2 and values.shape[0] == 1 and content.shape[0] > 1:
        norms = {k: NormParams(p.gamma[0], p.beta[0], k) for k, p in norms.items()}

    def block(h, layer):
        if layer.upsample > 1:
            h = upsample_nearest(h, layer.upsample)
        h = conv2d(h, params[f"transfer/{layer.name}/w"], stride=layer.stride)
        h = conditional_instance_norm(h, norms[layer.name], eps)
        if layer.activation == "relu":
            h = relu(h)
        elif layer.activation == "sigmoid":
            h = sigmoid(h)
        return h

    h = content
    pending_residual = None
    for layer in config.conv_layers():
        if layer.residual == "open":
            pending_residual = h
        h = block(h, layer)
        if layer.residual == "close":
            h = pending_residual + h
    return h


def predict_embedding(style, params, config, return_bottleneck=False):
    """Backbone -> channel means -> bottleneck -> embedding (both linear)."""
    _check_image(style, "style image")
    h = style
    for i in range(1, len(config.channels) + 1):
        h = relu(conv2d(h, params[f"predict/conv{i}/w"], params[f"predict/conv{i}/b"],
                        stride=config.stride))
    pooled = spatial_mean(h)
    z = linear(pooled, params["predict/bottleneck/w"], params["predict/bottleneck/b"])
    S = StyleEmbedding(linear(z, params["predict/out/w"], params["predict/out/b"]))
    if return_bottleneck:
        return S, z
    return S


def as_tensors(params, requires_grad=False, dtype=None):
    return {k: Tensor(v if dtype is None else v.astype(dtype), requires_grad=requires_grad)
            for k, v in params.items()}


def stylize(content, style, params, transfer_cfg, prediction_cfg):
    """T(c, P(s)) on raw arrays, without recording a graph."""
    with no_grad():
        tp = as_tensors(params)
        S = predict_embedding(Tensor(style), tp, prediction_cfg)
        return transfer_forward(Tensor(content), S, tp, transfer_cfg).data
