"""Operations in style-embedding space: interpolation, identity embedding, PCA grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from ..networks import StyleEmbedding
from ..tensor import Tensor


def _values(S):
    if isinstance(S, StyleEmbedding):
        return S.values.data
    if isinstance(S, Tensor):
        return S.data
    return np.asarray(S, dtype=np.float64)


def interpolate_embedding(S_a, S_b, alpha):
    """(1 - alpha) * S_a + alpha * S_b; the endpoints return the argument bitwise."""
    a, b = _values(S_a), _values(S_b)
    if a.shape != b.shape:
        raise InvalidArgument(f"embedding shapes differ: {a.shape} vs {b.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgument(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0.0:
        out = a.copy()
    elif alpha == 1.0:
        out = b.copy()
    else:
        out = (1.0 - alpha) * a + alpha * b
    return StyleEmbedding(Tensor(out))


def identity_embedding(content, model):
    """Embedding predicted from the content photograph itself."""
    return StyleEmbedding(Tensor(model.embed(content)))


@dataclass
class PCAResult:
    mean: np.ndarray  # [d]
    components: np.ndarray  # [k, d], orthonormal rows
    explained_variance: np.ndarray  # [k], non-increasing
    projections: np.ndarray  # [n, k]
    degenerate: bool = False

    def reconstruct(self, projections=None):
        p = self.projections if projections is None else projections
        return self.mean + p @ self.components


def pca(embeddings, k=None):
    """Principal components of the rows of ``embeddings`` via SVD of the centred data.

    Component signs are fixed so the largest-magnitude entry of each is positive.
    ``degenerate`` is set when the data has no variance at all.
    """
    X = np.asarray([_values(e).reshape(-1) for e in embeddings], dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidArgument("pca needs at least 2 samples")
    n, d = X.shape
    kmax = min(d, n - 1)
    k = kmax if k is None else k
    if not 1 <= k <= kmax:
        raise InvalidArgument(f"k must be in [1, {kmax}], got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=True)
    comps = vt[:k].copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    var = np.zeros(k)
    m = min(k, len(s))
    var[:m] = s[:m] ** 2 / (n - 1)
    degenerate = not np.any(s > 0)
    return PCAResult(mean=mean, components=comps, explained_variance=var,
                     projections=Xc @ comps.T, degenerate=degenerate)


def grid_offsets(grid_n, k_std):
    """Offsets in units of standard deviations spanning [-k_std, k_std]."""
    if grid_n < 1:
        raise InvalidArgument(f"grid_n must be >= 1, got {grid_n}")
    if grid_n == 1:
        return np.zeros(1)
    return np.linspace(-k_std, k_std, grid_n)


def pca_grid_embeddings(embeddings, k_std=4.0, grid_n=5):
    """Embeddings on a grid_n x grid_n lattice spanned by the top two components."""
    if len(embeddings) < 3:
        raise InvalidArgument("a PCA grid needs at least 3 embeddings")
    res = pca(embeddings, k=2)
    sigma = np.sqrt(res.explained_variance)
    offs = grid_offsets(grid_n, k_std)
    grid = np.empty((grid_n, grid_n, res.mean.size))
    for i, a in enumerate(offs):
        for j, b in enumerate(offs):
            point = res.mean.copy()
            if a != 0.0:
                point = point + a * sigma[0] * res.components[0]
            if b != 0.0:
                point = point + b * sigma[1] * res.components[1]
            grid[i, j] = point
    return grid, res


def pca_grid_stylize(embeddings, content, model, k_std=4.0, grid_n=5):
    """Stylize ``content`` at every PCA grid point; returns images[i][j] and the grid."""
    grid, _ = pca_grid_embeddings(embeddings, k_std, grid_n)
    images = [[model.render(content, grid[i, j][None]) for j in range(grid_n)] for i in range(grid_n)]
    return images, grid
