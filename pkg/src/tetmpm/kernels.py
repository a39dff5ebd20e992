"""Grid interpolation kernels.

Two kernels are supported: trilinear hats over the 8 surrounding nodes and
quadratic B-splines over a 3x3x3 stencil centered on the node nearest to the
evaluation point.  Both partition unity on their support and reproduce linear
fields exactly, which the transfer and contact stages rely on.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import OutOfGridError

_OFFSETS2 = np.stack(np.meshgrid(*(np.arange(2),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
_OFFSETS3 = np.stack(np.meshgrid(*(np.arange(3),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)


class KernelType(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


@dataclass
class KernelStencil:
    """Evaluation of one kernel at one point.

    node_indices are flat (C-order) grid node indices; weights sum to one and
    gradients (d/dx of the weights, 1/m units) sum to zero.
    """

    node_indices: np.ndarray  # (S,) int
    weights: np.ndarray       # (S,)
    gradients: np.ndarray     # (S, 3)


def support_size(kernel: KernelType) -> int:
    return 8 if kernel == KernelType.LINEAR else 27


def stencil_batch(x: np.ndarray, kernel: KernelType, grid):
    """Stencils for an array of positions, vectorized.

    Parameters
    ----------
    x : (n, 3) positions.
    kernel : KernelType.
    grid : object with ``spacing``, ``origin`` (3,) and ``dims`` (3,) attributes.

    Returns
    -------
    (indices (n, S) int32, weights (n, S), gradients (n, S, 3))
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = grid.spacing
    dims = np.asarray(grid.dims)
    u = (x - grid.origin) / h

    if kernel == KernelType.LINEAR:
        base = np.floor(u).astype(np.int64)
        if np.any(base < 0) or np.any(base + 1 > dims - 1):
            raise OutOfGridError("position outside linear-kernel node range")
        f = u - base  # in [0, 1)
        # per-axis weights for offsets {0, 1} and their derivatives
        w1d = np.stack([1.0 - f, f], axis=1)            # (n, 2, 3)
        d1d = np.broadcast_to(np.array([-1.0, 1.0])[None, :, None], w1d.shape) / h
        offs = _OFFSETS2
    else:
        base = np.floor(u - 0.5).astype(np.int64)
        if np.any(base < 0) or np.any(base + 2 > dims - 1):
            raise OutOfGridError("position outside quadratic-kernel node range")
        f = u - base  # in [0.5, 1.5)
        w1d = np.stack(
            [0.5 * (1.5 - f) ** 2, 0.75 - (f - 1.0) ** 2, 0.5 * (f - 0.5) ** 2], axis=1
        )
        d1d = np.stack([f - 1.5, -2.0 * (f - 1.0), f - 0.5], axis=1) / h
        offs = _OFFSETS3

    nodes = base[:, None, :] + offs[None, :, :]  # (n, S, 3)
    idx = (nodes[..., 0] * dims[1] + nodes[..., 1]) * dims[2] + nodes[..., 2]

    wx = w1d[:, offs[:, 0], 0]
    wy = w1d[:, offs[:, 1], 1]
    wz = w1d[:, offs[:, 2], 2]
    dx = d1d[:, offs[:, 0], 0]
    dy = d1d[:, offs[:, 1], 1]
    dz = d1d[:, offs[:, 2], 2]

    weights = wx * wy * wz
    grads = np.stack([dx * wy * wz, wx * dy * wz, wx * wy * dz], axis=-1)
    return idx.astype(np.int64), weights, grads


def stencil(x: np.ndarray, kernel: KernelType, grid) -> KernelStencil:
    """Kernel stencil at a single position.  Raises OutOfGridError outside the grid."""
    idx, w, g = stencil_batch(np.asarray(x, dtype=float)[None, :], kernel, grid)
    return KernelStencil(idx[0], w[0], g[0])
