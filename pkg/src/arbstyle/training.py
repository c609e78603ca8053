"""Joint training of the prediction and transfer networks, plus the two baselines.

* :func:`train_joint` -- S = P(s), x = T(c, S), minimize content + lambda * style
  with respect to both networks.
* :func:`direct_optimize` -- gradient descent on the pixels of x itself.
* :func:`train_adain_baseline` -- fixed encoder, AdaIN statistics swap, trained decoder.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint
from .config import RunConfig
from .data import load_corpus, resize_bilinear
from .errors import InvalidArgument, NonFiniteError
from .losses import LossNetwork, total_loss
from .networks import (
    as_tensors,
    init_prediction_params,
    init_transfer_params,
    predict_embedding,
    transfer_forward,
)
from .normalization import adain_transfer
from .optim import AdamState, adam_update
from .tensor import Tensor, conv2d, no_grad, relu, sigmoid, upsample_nearest

logger = logging.getLogger(__name__)

TrainConfig = RunConfig

TRACE_HEADER = ("step", "content_loss", "style_loss", "total")


# ---------------------------------------------------------------------------
# augmentation

@dataclass(frozen=True)
class AugmentOptions:
    flip: bool = True
    rescale: bool = True
    hue: bool = True
    contrast: bool = True
    flip_prob: float = 0.5
    rescale_range: tuple = (0.8, 1.2)
    hue_max: float = 0.1
    contrast_range: tuple = (0.8, 1.2)

    @classmethod
    def none(cls):
        return cls(flip=False, rescale=False, hue=False, contrast=False)


def hue_rotation_matrix(angle):
    """Rotation of RGB space about the gray axis (1, 1, 1)."""
    u = np.full(3, 1 / math.sqrt(3))
    cross = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    return math.cos(angle) * np.eye(3) + math.sin(angle) * cross + (1 - math.cos(angle)) * np.outer(u, u)


def _rescale_crop(img, factor, rng):
    C, H, W = img.shape
    nh, nw = max(1, round(H * factor)), max(1, round(W * factor))
    img = resize_bilinear(img, nh, nw)
    # crop axes that grew, mirror-pad axes that shrank
    if nh >= H:
        top = int(rng.integers(0, nh - H + 1))
        img = img[:, top:top + H]
    else:
        before = int(rng.integers(0, H - nh + 1))
        img = np.pad(img, ((0, 0), (before, H - nh - before), (0, 0)), mode="reflect")
    if nw >= W:
        left = int(rng.integers(0, nw - W + 1))
        img = img[:, :, left:left + W]
    else:
        before = int(rng.integers(0, W - nw + 1))
        img = np.pad(img, ((0, 0), (0, 0), (before, W - nw - before)), mode="reflect")
    return img


def augment_style(image, rng, options=None):
    """Random flip, rescale + crop, hue rotation and contrast on a [1,3,H,W] image."""
    options = options or AugmentOptions()
    img = np.asarray(image, dtype=np.float64)[0]
    if options.flip and rng.random() < options.flip_prob:
        img = img[:, :, ::-1]
    if options.rescale:
        img = _rescale_crop(img, rng.uniform(*options.rescale_range), rng)
    if options.hue:
        angle = rng.uniform(-options.hue_max, options.hue_max)
        img = np.tensordot(hue_rotation_matrix(angle), img, axes=(1, 0))
    if options.contrast:
        factor = rng.uniform(*options.contrast_range)
        mean = img.mean(axis=(1, 2), keepdims=True)
        img = (img - mean) * factor + mean
    return np.clip(img, 0.0, 1.0)[None].astype(np.asarray(image).dtype)


# ---------------------------------------------------------------------------
# shared plumbing

def _check_report(report, step):
    if not math.isfinite(report.total):
        raise NonFiniteError(f"non-finite loss at step {step}", step=step)


def _grads(tensors, names):
    out = {}
    for name in names:
        g = tensors[name].grad
        out[name] = np.zeros_like(tensors[name].data) if g is None else g
    return out


def _load_corpora(config, contents, styles):
    if contents is None:
        if not config.content_corpus:
            raise InvalidArgument("no content corpus given")
        contents = load_corpus(config.content_corpus, config.image_size)
    if styles is None:
        if not config.style_corpus:
            raise InvalidArgument("no style corpus given")
        styles = load_corpus(config.style_corpus, config.style_size)
    if not contents or not styles:
        raise InvalidArgument("content and style corpora must be non-empty")
    return contents, styles


def _sample_batch(config, contents, styles, rng, augment):
    B = config.batch_size
    ci = rng.integers(0, len(contents), size=B)
    si = rng.integers(0, len(styles), size=B)
    c = np.concatenate([contents[i].image for i in ci])
    if augment:
        opts = config.augment_options()
        s = np.concatenate([augment_style(styles[i].image, rng, opts) for i in si])
    else:
        s = np.concatenate([styles[i].image for i in si])
    return c.astype(config.dtype), s.astype(config.dtype)


def _style_digests(styles):
    from .data import image_digest

    return np.array([np.frombuffer(bytes.fromhex(image_digest(s.image)), dtype=np.uint8)
                     for s in styles], dtype=np.uint8)


def write_trace(trace, path):
    from .imageio import atomic_write_bytes
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for row in trace:
        writer.writerow([row[0]] + [repr(float(v)) for v in row[1:4]])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def loss_network_for(config):
    return LossNetwork(config.lossnet_config())


def _loop(config, params, trainable, forward, contents, styles, augment, callback):
    """Generic Adam loop; ``forward(tensors, c, s)`` returns a LossReport."""
    rng = np.random.default_rng(config.seed + 1)
    state = AdamState.create({k: params[k] for k in trainable}, lr=config.lr, beta1=config.beta1,
                             beta2=config.beta2, eps=config.adam_eps)
    trace = []
    for step in range(1, config.budget + 1):
        c, s = _sample_batch(config, contents, styles, rng, augment)
        tensors = as_tensors(params)
        for name in trainable:
            tensors[name].requires_grad = True
        report = forward(tensors, c, s)
        _check_report(report, step)
        report.objective.backward()
        updated, state = adam_update({k: params[k] for k in trainable}, _grads(tensors, trainable), state)
        params.update(updated)
        trace.append((step, report.content_loss, report.style_loss, report.total))
        if config.log_every and (step % config.log_every == 0 or step == 1):
            logger.info("step %d content %.5g style %.5g total %.5g",
                        step, report.content_loss, report.style_loss, report.total)
        if callback is not None:
            callback(step, report)
    return params, state, trace


# ---------------------------------------------------------------------------
# joint training

def init_joint_params(config):
    rng = np.random.default_rng(config.seed)
    tcfg = config.transfer_config()
    params = init_transfer_params(tcfg, rng, std=config.init_std, dtype=config.dtype)
    params.update(init_prediction_params(config.prediction_config(), rng, std=config.init_std,
                                         dtype=config.dtype, transfer=tcfg))
    return params


def train_joint(config, contents=None, styles=None, callback=None):
    """Train P and T together; returns a Checkpoint (with ``trace`` filled in)."""
    if config.budget < 1:
        raise InvalidArgument(f"budget must be >= 1, got {config.budget}")
    contents, styles = _load_corpora(config, contents, styles)
    net = loss_network_for(config)
    tcfg, pcfg = config.transfer_config(), config.prediction_config()
    params = init_joint_params(config)
    trainable = sorted(params)

    def forward(tp, c, s):
        S = predict_embedding(Tensor(s), tp, pcfg)
        x = transfer_forward(Tensor(c), S, tp, tcfg)
        return total_loss(x, Tensor(c), Tensor(s), net, config.lambda_s)

    params, state, trace = _loop(config.replace(model="joint"), params, trainable, forward,
                                 contents, styles, config.augment, callback)
    all_params = dict(params)
    all_params.update(net.weights)
    return Checkpoint(params=all_params, adam=state, config=config.replace(model="joint"),
                      meta={"style_digests": _style_digests(styles)}, trace=trace)


# ---------------------------------------------------------------------------
# direct pixel optimization

def direct_optimize(content, style, net, lambda_s, steps, lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8):
    """Adam on the pixels of x (initialized to the content image, clamped to [0, 1]).

    Returns ``(best_image, trace)`` where trace rows are
    ``(step, content_loss, style_loss, total, best_total)``; step k is the loss
    of the k-th iterate, so the trace has ``steps + 1`` rows.
    """
    if steps < 1:
        raise InvalidArgument(f"steps must be >= 1, got {steps}")
    content = np.asarray(content)
    style = np.asarray(style)
    c_t, s_t = Tensor(content), Tensor(style)
    targets = net.targets(c_t, s_t)
    x = {"x": content.copy()}
    state = AdamState.create(x, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    best_img, best = x["x"].copy(), math.inf
    trace = []
    for k in range(steps + 1):
        xt = Tensor(x["x"], requires_grad=k < steps)
        if k == steps:
            with no_grad():
                report = total_loss(xt, c_t, s_t, net, lambda_s, targets=targets)
        else:
            report = total_loss(xt, c_t, s_t, net, lambda_s, targets=targets)
        if not math.isfinite(report.total):
            raise NonFiniteError(f"non-finite loss at step {k}", step=k)
        if report.total < best:
            best, best_img = report.total, x["x"].copy()
        trace.append((k, report.content_loss, report.style_loss, report.total, best))
        if k == steps:
            break
        report.objective.backward()
        x, state = adam_update(x, {"x": xt.grad}, state)
        x["x"] = np.clip(x["x"], 0.0, 1.0)
    return best_img, trace


# ---------------------------------------------------------------------------
# AdaIN baseline

def adain_encoder_depth(config):
    return max(config.style_layers)


def adain_decoder_layers(config):
    """Mirror of the truncated encoder: (name, in, out, upsample, activation)."""
    depth = adain_encoder_depth(config)
    chans = (3,) + tuple(config.loss_channels[:depth])
    layers = []
    for i in range(depth, 0, -1):
        act = "sigmoid" if i == 1 else "relu"
        layers.append((f"decoder/conv{depth - i + 1}", chans[i], chans[i - 1],
                       config.loss_strides[i - 1], act))
    return layers


def init_decoder_params(config):
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, cin, cout, _, _ in adain_decoder_layers(config):
        k = config.inner_kernel
        params[f"{name}/w"] = rng.normal(0.0, config.init_std, size=(cout, cin, k, k)).astype(config.dtype)
        params[f"{name}/b"] = np.zeros(cout, dtype=config.dtype)
    return params


def adain_forward(content, style, params, net, config):
    """decoder(AdaIN(enc(c), enc(s))); the encoder is the loss network prefix."""
    depth = adain_encoder_depth(config)
    with no_grad():
        fc = net.features(content, upto=depth)[depth]
        fs = net.features(style, upto=depth)[depth]
        t = adain_transfer(fc, fs)
    h = Tensor(t.data)
    for name, _, _, up, act in adain_decoder_layers(config):
        if up > 1:
            h = upsample_nearest(h, up)
        h = conv2d(h, params[f"{name}/w"], params[f"{name}/b"])
        h = sigmoid(h) if act == "sigmoid" else relu(h)
    return h


def train_adain_baseline(config, contents=None, styles=None, callback=None):
    """Train only the decoder; style parameters come from encoder statistics."""
    if config.budget < 1:
        raise InvalidArgument(f"budget must be >= 1, got {config.budget}")
    contents, styles = _load_corpora(config, contents, styles)
    net = loss_network_for(config)
    params = init_decoder_params(config)
    trainable = sorted(params)

    def forward(tp, c, s):
        x = adain_forward(Tensor(c), Tensor(s), tp, net, config)
        return total_loss(x, Tensor(c), Tensor(s), net, config.lambda_s)

    cfg = config.replace(model="adain")
    params, state, trace = _loop(cfg, params, trainable, forward, contents, styles,
                                 config.augment, callback)
    all_params = dict(params)
    all_params.update(net.weights)
    return Checkpoint(params=all_params, adam=state, config=cfg,
                      meta={"style_digests": _style_digests(styles)}, trace=trace)
