"""Fixed-seed loss network and the Gram-matrix style / feature content objectives.

The loss network stands in for a pretrained classifier: a small stack of
randomly initialized ReLU convolutions whose weights are a pure function of
a seed.  Lower layers feed the style loss, higher layers the content loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, ShapeError
from .tensor import Tensor, apply_op, conv2d, no_grad, relu, scale, square, sub, tsum


@dataclass(frozen=True)
class LossNetConfig:
    channels: tuple = (8, 16, 16, 32)
    kernels: tuple = (3, 3, 3, 3)
    strides: tuple = (1, 2, 1, 2)
    style_layers: tuple = (1, 2, 3)
    content_layers: tuple = (4,)
    init_std: float = 0.3
    seed: int = 0

    def __post_init__(self):
        n = len(self.channels)
        if len(self.kernels) != n or len(self.strides) != n:
            raise InvalidArgument("loss network channels, kernels and strides must have equal length")
        layers = set(self.style_layers) | set(self.content_layers)
        if not layers or min(layers) < 1 or max(layers) > n:
            raise InvalidArgument(f"style/content layers must be in 1..{n}")
        if not self.style_layers or not self.content_layers:
            raise InvalidArgument("need at least one style layer and one content layer")
        if max(self.style_layers) >= min(self.content_layers):
            raise InvalidArgument("style layers must all precede the content layers")


class LossNetwork:
    """Immutable feature extractor; layers are numbered from 1."""

    def __init__(self, config=None, weights=None):
        self.config = config or LossNetConfig()
        if weights is None:
            weights = self.init_weights(self.config)
        self.weights = {k: np.asarray(v, dtype=np.float64) for k, v in weights.items()}
        self._cast = {}

    @staticmethod
    def init_weights(config):
        rng = np.random.default_rng(config.seed)
        weights = {}
        cin = 3
        for i, (cout, k) in enumerate(zip(config.channels, config.kernels), start=1):
            weights[f"loss/conv{i}/w"] = rng.normal(0.0, config.init_std, size=(cout, cin, k, k))
            weights[f"loss/conv{i}/b"] = np.zeros(cout)
            cin = cout
        return weights

    @property
    def depth(self):
        return len(self.config.channels)

    @property
    def style_layers(self):
        return tuple(self.config.style_layers)

    @property
    def content_layers(self):
        return tuple(self.config.content_layers)

    def _params(self, dtype):
        key = np.dtype(dtype).str
        if key not in self._cast:
            self._cast[key] = {k: Tensor(v.astype(dtype)) for k, v in self.weights.items()}
        return self._cast[key]

    def features(self, x, upto=None):
        """Post-ReLU activations keyed by layer number, up to layer ``upto``."""
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"loss network expects [N,3,H,W] images, got {x.shape}")
        upto = self.depth if upto is None else upto
        params = self._params(x.dtype)
        feats = {}
        h = x
        for i in range(1, upto + 1):
            h = relu(conv2d(h, params[f"loss/conv{i}/w"], params[f"loss/conv{i}/b"],
                            stride=self.config.strides[i - 1]))
            feats[i] = h
        return feats

    def targets(self, content=None, style=None):
        """Constant content features and style Gram matrices for repeated use."""
        with no_grad():
            cf = sf = None
            if content is not None:
                f = self.features(content, upto=max(self.content_layers))
                cf = {j: f[j] for j in self.content_layers}
            if style is not None:
                f = self.features(style, upto=max(self.style_layers))
                sf = {i: gram_matrix(f[i]) for i in self.style_layers}
        return cf, sf


def gram_matrix(features):
    """G[n, i, j] = mean over positions of f_i * f_j."""
    if features.ndim != 4:
        raise ShapeError(f"gram_matrix expects [N,C,H,W], got {features.shape}")
    N, C, H, W = features.shape
    hw = H * W
    if hw < 1:
        raise ShapeError("gram_matrix needs H*W >= 1")
    F = features.data.reshape(N, C, hw)
    G = (F @ F.transpose(0, 2, 1)) / hw

    def backward(g):
        return (((g + g.transpose(0, 2, 1)) @ F / hw).reshape(features.shape),)

    return apply_op(G, (features,), backward, "gram")


def _units(t):
    return t.shape[1] * t.shape[2] * t.shape[3]


def _batch_mean(per_sample):
    # per_sample: [N] tensor
    return scale(tsum(per_sample), 1.0 / per_sample.shape[0])


def _style_terms(x_feats, style_grams):
    terms = {}
    for i, target in style_grams.items():
        fx = x_feats[i]
        gx = gram_matrix(fx)
        if target.shape[0] not in (1, gx.shape[0]) or target.shape[1:] != gx.shape[1:]:
            raise ShapeError(f"style layer {i}: Gram shapes {gx.shape} and {target.shape} differ")
        diff = sub(gx, Tensor(np.broadcast_to(target.data, gx.shape)))
        per = scale(tsum(square(diff), axis=(1, 2)), 1.0 / _units(fx))
        terms[i] = _batch_mean(per)
    return terms


def _content_terms(x_feats, content_feats):
    terms = {}
    for j, target in content_feats.items():
        fx = x_feats[j]
        if target.shape[1:] != fx.shape[1:] or target.shape[0] not in (1, fx.shape[0]):
            raise ShapeError(f"content layer {j}: feature shapes {fx.shape} and {target.shape} differ")
        diff = sub(fx, Tensor(np.broadcast_to(target.data, fx.shape)))
        per = scale(tsum(square(diff), axis=(1, 2, 3)), 1.0 / _units(fx))
        terms[j] = _batch_mean(per)
    return terms


def _sum_terms(terms):
    total = None
    for t in terms.values():
        total = t if total is None else total + t
    return total


def _check_pair(a, b, what):
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError(f"{what}: images must be [N,3,H,W]")
    if b.shape[0] not in (1, a.shape[0]):
        raise ShapeError(f"{what}: batch sizes {a.shape[0]} and {b.shape[0]} are incompatible")


def style_loss(x_img, s_img, net):
    """Sum over style layers of ||G(x) - G(s)||_F^2 / n_i, averaged over the batch."""
    _check_pair(x_img, s_img, "style_loss")
    _, grams = net.targets(style=s_img)
    feats = net.features(x_img, upto=max(net.style_layers))
    return _sum_terms(_style_terms(feats, grams))


def content_loss(x_img, c_img, net):
    """Sum over content layers of ||f(x) - f(c)||^2 / n_j, averaged over the batch."""
    _check_pair(x_img, c_img, "content_loss")
    if x_img.shape[2:] != c_img.shape[2:]:
        raise ShapeError(f"content_loss: spatial dims {x_img.shape[2:]} and {c_img.shape[2:]} differ")
    cf, _ = net.targets(content=c_img)
    feats = net.features(x_img, upto=max(net.content_layers))
    return _sum_terms(_content_terms(feats, cf))


@dataclass
class LossReport:
    content_loss: float
    style_loss: float
    total: float
    per_layer: dict
    lambda_s: float
    objective: Tensor | None = field(default=None, repr=False, compare=False)


def total_loss(x_img, c_img, s_img, net, lambda_s, *, targets=None):
    """content + lambda_s * style for x, with the scalar objective kept on the tape.

    ``targets`` may carry ``net.targets(c_img, s_img)`` precomputed; the
    images are then only used for shape checks.
    """
    if not lambda_s > 0:
        raise InvalidArgument(f"lambda_s must be > 0, got {lambda_s}")
    _check_pair(x_img, c_img, "total_loss")
    _check_pair(x_img, s_img, "total_loss")
    if x_img.shape[2:] != c_img.shape[2:]:
        raise ShapeError(f"total_loss: x and content spatial dims {x_img.shape[2:]} vs {c_img.shape[2:]}")
    cf, grams = targets if targets is not None else net.targets(c_img, s_img)
    feats = net.features(x_img)
    s_terms = _style_terms(feats, grams)
    c_terms = _content_terms(feats, cf)
    s_val, c_val = _sum_terms(s_terms), _sum_terms(c_terms)
    objective = c_val + scale(s_val, lambda_s)
    per_layer = {f"style/{i}": float(t) for i, t in s_terms.items()}
    per_layer.update({f"content/{j}": float(t) for j, t in c_terms.items()})
    cl, sl = float(c_val), float(s_val)
    return LossReport(content_loss=cl, style_loss=sl, total=cl + lambda_s * sl,
                      per_layer=per_layer, lambda_s=float(lambda_s), objective=objective)
