"""Finite-difference checks of every differentiable primitive and of the full objective."""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .losses import LossNetwork, gram_matrix, total_loss
from .networks import init_prediction_params, init_transfer_params, predict_embedding, transfer_forward
from .normalization import NormParams, conditional_instance_norm
from .tensor import (
    Tensor,
    concat,
    conv2d,
    getitem,
    grad_check,
    linear,
    matmul,
    mul,
    no_grad,
    reflect_pad,
    relu,
    reshape,
    sigmoid,
    spatial_mean,
    spatial_moments,
    square,
    tmean,
    tsum,
    upsample_nearest,
)

# Small enough to probe every coordinate of every parameter in seconds.
TINY_CONFIG = RunConfig(
    precision="float64", image_size=8, style_size=8,
    transfer_channels=(2, 3, 4), residual_blocks=1, outer_kernel=3, inner_kernel=3,
    predict_channels=(2, 3, 4), bottleneck=3,
    loss_channels=(3, 4, 4, 5), style_layers=(1, 2, 3), content_layers=(4,),
    init_std=0.3, batch_size=2,
)


def _contracted(fn, rng):
    # contract the output with a fixed random tensor so every coordinate matters
    with no_grad():
        shape = fn().shape
    w = Tensor(rng.normal(size=shape))
    return lambda: tsum(mul(fn(), w))


def primitive_cases(rng):
    """(name, scalar closure, params) triples covering each differentiable primitive."""
    def T(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    raw = []
    a, b = T(3, 4), T(3, 4)
    raw.append(("add/sub/mul", lambda: mul(a + b, a - b), [a, b]))
    x = T(2, 5)
    raw.append(("square/relu", lambda: relu(square(x) - 0.5), [x]))
    s = T(4, 3)
    raw.append(("scale/sigmoid", lambda: sigmoid(s * 3.0), [s]))
    m1, m2 = T(3, 4), T(4, 2)
    raw.append(("matmul", lambda: matmul(m1, m2), [m1, m2]))
    lx, lw, lb = T(2, 4), T(3, 4), T(3)
    raw.append(("linear", lambda: linear(lx, lw, lb), [lx, lw, lb]))
    r = T(2, 3, 4)
    raw.append(("reshape/getitem/mean",
                lambda: getitem(reshape(r, (6, 4)), (slice(1, 5), slice(None, None, 2))) + tmean(r), [r]))
    c1, c2 = T(1, 2, 3), T(1, 1, 3)
    raw.append(("concat", lambda: concat([c1, c2], axis=1), [c1, c2]))
    p = T(1, 2, 4, 5)
    raw.append(("reflect_pad", lambda: reflect_pad(p, (1, 2, 3, 1)), [p]))
    u = T(1, 2, 3, 3)
    raw.append(("upsample_nearest", lambda: upsample_nearest(u, 2), [u]))
    for stride in (1, 2):
        for padding in ("same-reflect", "valid"):
            ci, ck, cb = T(2, 2, 6, 6), T(3, 2, 3, 3), T(3)
            raw.append((f"conv2d/s{stride}/{padding}",
                        lambda ci=ci, ck=ck, cb=cb, st=stride, pd=padding: conv2d(ci, ck, cb, stride=st, padding=pd),
                        [ci, ck, cb]))
    m = T(2, 3, 4, 4)
    raw.append(("spatial_moments", lambda: concat(list(spatial_moments(m)), axis=1), [m]))
    m2d = T(2, 3, 4, 4)
    raw.append(("spatial_mean", lambda: spatial_mean(m2d), [m2d]))
    nx, ng, nb = T(2, 3, 4, 4), T(3), T(3)
    raw.append(("conditional_instance_norm", lambda: conditional_instance_norm(nx, NormParams(ng, nb)),
                [nx, ng, nb]))
    gx, gg, gb = T(2, 3, 4, 4), T(2, 3), T(2, 3)
    raw.append(("conditional_instance_norm/per-sample", lambda: conditional_instance_norm(gx, NormParams(gg, gb)),
                [gx, gg, gb]))
    f = T(2, 3, 3, 4)
    raw.append(("gram_matrix", lambda: gram_matrix(f), [f]))
    return [(name, _contracted(fn, rng), params) for name, fn, params in raw]


def check_primitives(seed, h=1e-4):
    """{primitive name: max relative error} for one seed."""
    rng = np.random.default_rng(seed)
    return {name: grad_check(fn, params, h=h) for name, fn, params in primitive_cases(rng)}


def check_end_to_end(seed, config=TINY_CONFIG, h=1e-5, max_coords=30, floor=1e-6):
    """Max relative error of the gradient of total_loss(T(c, P(s)), c, s) w.r.t. every weight of P and T.

    The images are constants: the loss targets are computed from them without a graph.
    Gradients below ``floor`` are exactly-zero entries (dead ReLU channels) up to
    roundoff, so they are compared on an absolute scale.
    """
    rng = np.random.default_rng(seed)
    tcfg, pcfg = config.transfer_config(), config.prediction_config()
    raw = init_transfer_params(tcfg, rng, std=config.init_std, dtype=np.float64)
    raw.update(init_prediction_params(pcfg, rng, std=config.init_std, dtype=np.float64, transfer=tcfg))
    for k in raw:
        if k.startswith("predict/") and k.endswith("/b"):
            raw[k] = raw[k] + rng.normal(0.0, 0.1, size=raw[k].shape)
    params = {k: Tensor(v, requires_grad=True) for k, v in raw.items()}
    n, size = config.batch_size, config.image_size
    c = Tensor(rng.uniform(0.1, 0.9, size=(n, 3, size, size)))
    s = Tensor(rng.uniform(0.1, 0.9, size=(n, 3, size, size)))
    net = LossNetwork(config.lossnet_config())

    def objective():
        S = predict_embedding(s, params, pcfg)
        x = transfer_forward(c, S, params, tcfg)
        return total_loss(x, c, s, net, config.lambda_s).objective

    names = sorted(params)
    return grad_check(objective, [params[k] for k in names], h=h, max_coords=max_coords,
                      rng=np.random.default_rng(seed), floor=floor)
