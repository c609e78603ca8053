"""Instance statistics, conditional instance normalization and the AdaIN mapping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ShapeError
from .tensor import Tensor, apply_op, spatial_moments

# Added to the variance, not the std.
EPS = 1e-5


@dataclass
class NormParams:
    """Per-channel scale/shift following one convolution.

    ``gamma`` and ``beta`` are Tensors of shape [C] (shared over the batch)
    or [N, C] (one pair per sample).
    """

    gamma: Tensor
    beta: Tensor
    layer_id: str = ""

    @property
    def channels(self):
        return self.gamma.shape[-1]


def conditional_instance_norm(x, params, eps=EPS):
    """Normalize each (sample, channel) map over space, then apply gamma * . + beta."""
    if x.ndim != 4:
        raise ShapeError(f"conditional_instance_norm expects [N,C,H,W], got {x.shape}")
    if eps <= 0:
        raise InvalidArgument(f"eps must be positive, got {eps}")
    gamma, beta = params.gamma, params.beta
    N, C, H, W = x.shape
    if gamma.shape != beta.shape:
        raise InvalidArgument(f"gamma shape {gamma.shape} != beta shape {beta.shape}")
    if gamma.shape not in ((C,), (N, C)):
        raise InvalidArgument(
            f"layer {params.layer_id or '?'}: norm params of shape {gamma.shape} do not match "
            f"{C} channels (batch {N})"
        )
    per_sample = gamma.ndim == 2
    xd = x.data
    mu = xd.mean(axis=(2, 3), keepdims=True)
    centered = xd - mu
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = centered * inv
    g4 = gamma.data.reshape((N if per_sample else 1), C, 1, 1)
    b4 = beta.data.reshape((N if per_sample else 1), C, 1, 1)
    out = g4 * xhat + b4
    hw = H * W

    def backward(g):
        gx = None
        if x.requires_grad:
            dxhat = g * g4
            s1 = dxhat.sum(axis=(2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(2, 3), keepdims=True)
            gx = (inv / hw) * (hw * dxhat - s1 - xhat * s2)
        ggamma = (g * xhat).sum(axis=(2, 3))
        gbeta = g.sum(axis=(2, 3))
        if not per_sample:
            ggamma, gbeta = ggamma.sum(axis=0), gbeta.sum(axis=0)
        return gx, ggamma, gbeta

    return apply_op(out.astype(x.dtype, copy=False), (x, gamma, beta), backward, "cin")


def adain_params(style_features, eps=EPS):
    """beta = spatial mean and gamma = population spatial std of each channel.

    ``eps`` is unused here; it is accepted so the mapping and the transfer
    share a signature.
    """
    if style_features.ndim != 4:
        raise ShapeError(f"style features must be [N,C,H,W], got {style_features.shape}")
    mean, std = spatial_moments(style_features)
    if style_features.shape[0] == 1:
        return NormParams(gamma=std[0], beta=mean[0], layer_id="adain")
    return NormParams(gamma=std, beta=mean, layer_id="adain")


def adain_transfer(content_features, style_features, eps=EPS):
    if content_features.ndim != 4 or style_features.ndim != 4:
        raise ShapeError("adain_transfer expects [N,C,H,W] features")
    if content_features.shape[1] != style_features.shape[1]:
        raise InvalidArgument(
            f"channel mismatch: content has {content_features.shape[1]}, "
            f"style has {style_features.shape[1]}"
        )
    ns, nc = style_features.shape[0], content_features.shape[0]
    if ns != 1 and ns != nc:
        raise InvalidArgument(f"style batch {ns} must be 1 or equal the content batch {nc}")
    return conditional_instance_norm(content_features, adain_params(style_features, eps), eps)
