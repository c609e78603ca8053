"""Exact O(n^2) t-SNE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument

_FLOOR = 1e-12


@dataclass
class TSNEResult:
    layout: np.ndarray  # [n, 2]
    kl_trace: list  # KL(P || Q) of the initial layout, then after each iteration


def _sq_distances(X):
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _row_affinities(dist_row, target_entropy, tol=1e-10, max_iter=200):
    # binary search on precision beta = 1 / (2 sigma^2)
    beta, lo, hi = 1.0, 0.0, np.inf
    d = dist_row - dist_row.min()
    for _ in range(max_iter):
        p = np.exp(-d * beta)
        total = p.sum()
        p /= total
        entropy = -np.sum(p * np.log(np.maximum(p, 1e-300)))
        if abs(entropy - target_entropy) < tol:
            break
        if entropy > target_entropy:
            lo = beta
            beta = beta * 2 if hi == np.inf else (beta + hi) / 2
        else:
            hi = beta
            beta = (beta + lo) / 2
    return p


def joint_probabilities(X, perplexity):
    n = X.shape[0]
    D = _sq_distances(X)
    P = np.zeros((n, n))
    target = np.log(perplexity)
    for i in range(n):
        others = np.r_[0:i, i + 1:n]
        P[i, others] = _row_affinities(D[i, others], target)
    P = (P + P.T) / (2.0 * n)
    return np.maximum(P, _FLOOR)


def _student_t(Y):
    num = 1.0 / (1.0 + _sq_distances(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), _FLOOR)
    return num, Q


def _kl(P, Q):
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def tsne(points, perplexity=15.0, iters=500, rng=None, *, learning_rate=100.0, exaggeration=4.0,
         exaggeration_iters=100, momentum=(0.5, 0.8), momentum_switch=250, init_std=1e-4,
         min_gain=0.01, init=None):
    """Embed ``points`` (n x d) in 2-d; returns a :class:`TSNEResult`.

    ``perplexity`` must lie in [1, n - 1]: a point has n - 1 neighbours, so no
    conditional distribution can have a larger perplexity.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgument(f"points must be n x d, got shape {X.shape}")
    n = X.shape[0]
    if n < 2 or n > 2000:
        raise InvalidArgument(f"exact t-SNE supports 2 <= n <= 2000 points, got {n}")
    if not 1.0 <= perplexity <= n - 1:
        raise InvalidArgument(f"perplexity {perplexity} infeasible for {n} points (needs 1 <= perplexity <= {n - 1})")
    if iters < 1:
        raise InvalidArgument(f"iters must be >= 1, got {iters}")
    rng = np.random.default_rng(0) if rng is None else rng
    P = joint_probabilities(X, perplexity)
    Y = rng.normal(0.0, init_std, size=(n, 2)) if init is None else np.array(init, dtype=np.float64)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace = [_kl(P, _student_t(Y)[1])]
    for it in range(iters):
        Pe = P * exaggeration if it < exaggeration_iters else P
        num, Q = _student_t(Y)
        W = (Pe - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        mom = momentum[0] if it < momentum_switch else momentum[1]
        same = (grad > 0) == (update > 0)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, min_gain, out=gains)
        update = mom * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        trace.append(_kl(P, _student_t(Y)[1]))
    return TSNEResult(layout=Y, kl_trace=trace)
