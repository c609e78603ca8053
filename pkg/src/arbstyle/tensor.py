"""Dense NCHW tensors with reverse-mode differentiation.

Every differentiable value is a :class:`Tensor`.  Primitives record their
parents and a backward closure on the output tensor; calling
:meth:`Tensor.backward` on a scalar walks that graph in reverse topological
order, visiting each node once, and accumulates ``.grad`` on the leaves that
were created with ``requires_grad=True``.

Recording is skipped entirely inside :func:`no_grad`, which inference paths
use to avoid holding intermediate buffers.
"""

from __future__ import annotations

import contextlib
import logging
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GradCheckFailure, InvalidArgument, ShapeError

logger = logging.getLogger(__name__)

_FLOAT_TYPES = (np.float32, np.float64)
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording for the enclosed block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _FLOAT_TYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise InvalidArgument(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __float__(self):
        return self.item()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag}, op={self.op})"

    def __len__(self):
        return self.shape[0]

    # -- autodiff --------------------------------------------------------
    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise InvalidArgument(
                    f"backward() without an explicit gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.dtype)
            if grad.shape != self.shape:
                raise ShapeError(f"gradient shape {grad.shape} != tensor shape {self.shape}")
        if not self.requires_grad:
            return
        order = _topological_order(self)
        pending = {id(self): grad}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg

    # -- operators -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise InvalidArgument("division is only defined by a scalar")
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def apply_op(data, parents, backward, op="op"):
    """Wrap ``data`` as the output of a primitive.

    ``backward`` maps the output gradient to a tuple with one entry per
    parent (``None`` where no gradient flows).
    """
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    out.op = op
    return out


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if isinstance(like, Tensor) else None
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_check(a, b, name):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise InvalidArgument(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise primitives

def add(a, b):
    a, b = as_tensor(a, b), as_tensor(b, a)
    _broadcast_check(a, b, "add")
    sa, sb = a.shape, b.shape
    return apply_op(a.data + b.data, (a, b),
                    lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a, b), as_tensor(b, a)
    _broadcast_check(a, b, "sub")
    sa, sb = a.shape, b.shape
    return apply_op(a.data - b.data, (a, b),
                    lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    a, b = as_tensor(a, b), as_tensor(b, a)
    _broadcast_check(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return apply_op(ad * bd, (a, b), backward, "mul")


def scale(x, factor):
    factor = float(factor)
    return apply_op(x.data * x.dtype.type(factor), (x,),
                    lambda g: (g * g.dtype.type(factor),), "scale")


def square(x):
    xd = x.data
    return apply_op(xd * xd, (x,), lambda g: (2.0 * g * xd,), "square")


def relu(x):
    mask = x.data > 0
    return apply_op(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,),
                    lambda g: (g * mask,), "relu")


def sigmoid(x):
    # exp(-log(1 + exp(-x))) stays accurate for large |x| in both directions;
    # the clip keeps saturated outputs strictly inside (0, 1)
    info = np.finfo(x.dtype)
    y = np.exp(-np.logaddexp(0, -x.data)).astype(x.dtype, copy=False)
    y = np.clip(y, info.tiny, 1 - info.epsneg)
    return apply_op(y, (x,), lambda g: (g * y * (1 - y),), "sigmoid")


_ELEMENTWISE = {
    "relu": relu,
    "sigmoid": sigmoid,
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
}


def elementwise(op, *operands):
    """Dispatch a named elementwise primitive (relu, sigmoid, add, mul, sub, scale)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise InvalidArgument(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(*operands)


# ---------------------------------------------------------------------------
# reductions and shape ops

def tsum(x, axis=None, keepdims=False):
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return apply_op(np.asarray(out, dtype=x.dtype), (x,), backward, "sum")


def tmean(x, axis=None, keepdims=False):
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = math.prod(x.shape[a] for a in axes)
    return scale(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape):
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {old} to {shape}") from exc
    return apply_op(out, (x,), lambda g: (g.reshape(old),), "reshape")


def getitem(x, index):
    shape, dtype = x.shape, x.dtype

    def backward(g):
        gx = np.zeros(shape, dtype=dtype)
        np.add.at(gx, index, g)
        return (gx,)

    return apply_op(np.array(x.data[index]), (x,), backward, "getitem")


def concat(tensors, axis=0):
    tensors = list(tensors)
    if not tensors:
        raise InvalidArgument("concat of an empty list")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return apply_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return apply_op(ad @ bd, (a, b), backward, "matmul")


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` for x of shape [N, in] and weight [out, in]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    parents = [x, weight]
    if bias is not None:
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        grads = [g @ wd if x.requires_grad else None, g.T @ xd]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return tuple(grads)

    return apply_op(out, parents, backward, "linear")


# ---------------------------------------------------------------------------
# image primitives

def _pad_extents(pad):
    if isinstance(pad, (int, np.integer)):
        return (int(pad),) * 4
    pad = tuple(int(p) for p in pad)
    if len(pad) == 2:
        return (pad[0], pad[0], pad[1], pad[1])
    if len(pad) != 4:
        raise InvalidArgument(f"pad must be an int, (h, w) or (top, bottom, left, right); got {pad}")
    return pad


def _unpad_reflect_axis(g, before, after, n, axis):
    g = np.moveaxis(g, axis, -1)
    out = g[..., before:before + n].copy()
    if before:
        out[..., 1:before + 1] += g[..., :before][..., ::-1]
    if after:
        out[..., n - 1 - after:n - 1] += g[..., before + n:][..., ::-1]
    return np.moveaxis(out, -1, axis)


def reflect_pad(x, pad):
    """Mirror-pad the last two axes without repeating the edge sample.

    ``pad`` is an int, an ``(h, w)`` pair, or ``(top, bottom, left, right)``.
    Each extent must be smaller than the axis it pads.
    """
    top, bottom, left, right = _pad_extents(pad)
    if x.ndim < 2:
        raise ShapeError(f"reflect_pad needs at least 2 dims, got {x.shape}")
    H, W = x.shape[-2:]
    for extent, dim, label in ((top, H, "top"), (bottom, H, "bottom"), (left, W, "left"), (right, W, "right")):
        if extent < 0:
            raise InvalidArgument(f"negative {label} pad {extent}")
        if extent >= dim and extent > 0:
            raise InvalidArgument(f"{label} pad {extent} must be smaller than the padded dim {dim}")
    if not (top or bottom or left or right):
        return apply_op(x.data.copy(), (x,), lambda g: (g,), "reflect_pad")
    widths = [(0, 0)] * (x.ndim - 2) + [(top, bottom), (left, right)]
    out = np.pad(x.data, widths, mode="reflect")

    def backward(g):
        g = _unpad_reflect_axis(g, top, bottom, H, x.ndim - 2)
        return (_unpad_reflect_axis(g, left, right, W, x.ndim - 1),)

    return apply_op(out, (x,), backward, "reflect_pad")


def upsample_nearest(x, factor):
    factor = int(factor)
    if factor < 1:
        raise InvalidArgument(f"upsample factor must be >= 1, got {factor}")
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest expects [N,C,H,W], got {x.shape}")
    if factor == 1:
        return apply_op(x.data.copy(), (x,), lambda g: (g,), "upsample")
    N, C, H, W = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)
    return apply_op(out, (x,),
                    lambda g: (g.reshape(N, C, H, factor, W, factor).sum(axis=(3, 5)),),
                    "upsample")


def _conv_valid(x, w, b, stride):
    N, C, Hp, Wp = x.shape
    K, _, kh, kw = w.shape
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    windows = sliding_window_view(x.data, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(N * Ho * Wo, C * kh * kw)
    wmat = w.data.reshape(K, -1)
    out = cols @ wmat.T
    if b is not None:
        out += b.data
    out = np.ascontiguousarray(out.reshape(N, Ho, Wo, K).transpose(0, 3, 1, 2))
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, K)
        gw = (g2.T @ cols).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(N, Ho, Wo, C, kh, kw)
            gx = np.zeros(x.shape, dtype=x.dtype)
            hspan = stride * (Ho - 1) + 1
            wspan = stride * (Wo - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i:i + hspan:stride, j:j + wspan:stride] += dcols[..., i, j].transpose(0, 3, 1, 2)
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return apply_op(out, parents, backward, "conv2d")


def conv2d(input, kernel, bias=None, stride=1, padding="same-reflect"):
    """2-D cross-correlation on [N,C,H,W] with a [K,C,kh,kw] kernel.

    ``same-reflect`` mirror-pads by ``(k - 1) // 2`` per side before a valid
    strided correlation, so output extents are ``ceil(H / stride)``.
    """
    if input.ndim != 4:
        raise ShapeError(f"conv2d input must be [N,C,H,W], got shape {input.shape}")
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel must be [K,C,kh,kw], got shape {kernel.shape}")
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise InvalidArgument(f"stride must be a positive int, got {stride!r}")
    N, C, H, W = input.shape
    K, Ck, kh, kw = kernel.shape
    if Ck != C:
        raise ShapeError(f"conv2d kernel expects {Ck} input channels, input has {C}")
    if H < 1 or W < 1:
        raise ShapeError(f"conv2d input spatial dims must be >= 1, got {H}x{W}")
    if bias is not None and bias.shape != (K,):
        raise ShapeError(f"conv2d bias must have shape ({K},), got {bias.shape}")
    if padding == "same-reflect":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"same-reflect padding needs odd kernel sizes, got {kh}x{kw}")
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
        if ph or pw:
            input = reflect_pad(input, (ph, ph, pw, pw))
    elif padding == "valid":
        if kh > H or kw > W:
            raise ShapeError(f"valid conv2d kernel {kh}x{kw} larger than input {H}x{W}")
    else:
        raise InvalidArgument(f"padding must be 'same-reflect' or 'valid', got {padding!r}")
    return _conv_valid(input, kernel, bias, int(stride))


def spatial_mean(x):
    if x.ndim != 4:
        raise ShapeError(f"expected [N,C,H,W], got {x.shape}")
    return tmean(x, axis=(2, 3))


def spatial_moments(x):
    """Per-(sample, channel) mean and population std over H x W."""
    if x.ndim != 4:
        raise ShapeError(f"expected [N,C,H,W], got {x.shape}")
    N, C, H, W = x.shape
    if H * W < 1:
        raise ShapeError("spatial_moments needs H*W >= 1")
    mean = spatial_mean(x)
    centered = x.data - mean.data[:, :, None, None]
    std_data = np.sqrt((centered * centered).mean(axis=(2, 3)))

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(std_data > 0, g / (H * W * std_data), 0.0).astype(x.dtype, copy=False)
        return (coef[:, :, None, None] * centered,)

    std = apply_op(std_data, (x,), backward, "spatial_std")
    return mean, std


# ---------------------------------------------------------------------------
# finite-difference checking

def _central_difference(f, flat, idx, h, param_index):
    orig = flat[idx]
    flat[idx] = orig + h
    fp = float(f().data)
    flat[idx] = orig - h
    fm = float(f().data)
    flat[idx] = orig
    if not (math.isfinite(fp) and math.isfinite(fm)):
        raise GradCheckFailure(f"non-finite function value probing parameter {param_index} entry {idx}",
                               param_index=param_index, flat_index=int(idx))
    return (fp - fm) / (2 * h)


def grad_check(f, params, h=1e-5, *, max_coords=None, rng=None, floor=1e-8, refine=True):
    """Largest relative error between backprop and central differences.

    ``f`` takes no arguments and returns a scalar Tensor computed from
    ``params`` (float64 Tensors, perturbed in place during probing).
    With ``max_coords`` only that many randomly chosen entries per parameter
    are probed.

    The error of one entry is |a - n| / max(|a|, |n|, floor), so gradients
    below ``floor`` are judged on an absolute scale. With ``refine`` an entry
    whose error exceeds 1e-6 is probed again with h / 10 and the smaller error
    kept; a step that straddles a ReLU kink rarely straddles it at both sizes.
    """
    if not 1e-7 <= h <= 1e-3:
        raise InvalidArgument(f"step h must lie in [1e-7, 1e-3], got {h}")
    params = list(params)
    for p in params:
        if p.dtype != np.float64:
            raise InvalidArgument("grad_check requires float64 parameters")
        p.requires_grad = True
        p.grad = None
    out = f()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    with no_grad():
        for pi, p in enumerate(params):
            flat = p.data.reshape(-1)
            if max_coords is not None and flat.size > max_coords:
                coords = rng.choice(flat.size, size=max_coords, replace=False)
            else:
                coords = range(flat.size)
            for idx in coords:
                a = float(analytic[pi].reshape(-1)[idx])
                steps = (h, h / 10) if refine and h / 10 >= 1e-7 else (h,)
                err = math.inf
                for step in steps:
                    numeric = _central_difference(f, flat, idx, step, pi)
                    err = min(err, abs(a - numeric) / max(abs(a), abs(numeric), floor))
                    if err <= 1e-6:
                        break
                worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst
