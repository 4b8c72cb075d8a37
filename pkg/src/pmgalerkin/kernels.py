"""Hot loops for the quadrature-point sweep.

Both built-in PDE systems reduce to a five-point stencil with per-node
weights ``(center, east, west, north, south)`` on an ``m x m`` interior grid,
node ``(i, j)`` stored at flat index ``i * m + j``. Neighbours outside the
grid are dropped (homogeneous Dirichlet). The batched form applies one
stencil per quadrature point.

``stencil5_apply_batch`` dispatches to the numba kernel unless
``PMGALERKIN_DISABLE_NUMBA`` is set; both implementations stay importable so
they can be benchmarked against each other.
"""
import numpy as np

from ._accel import NUMBA_ENABLED, njit, prange

CENTER, EAST, WEST, NORTH, SOUTH = range(5)


def stencil5_apply_batch_numpy(weights, w, out=None):
    """Apply a batch of five-point stencils with numpy slicing.

    Args:
        weights: array ``(J, 5, m, m)`` of stencil weights.
        w: array ``(J, m*m)``; row ``b`` is the vector hit by stencil ``b``.
        out: optional output array ``(J, m*m)``.

    Returns:
        Array ``(J, m*m)``.
    """
    nb, _, m, _ = weights.shape
    u = w.reshape(nb, m, m)
    if out is None:
        out = np.empty((nb, m * m))
    y = out.reshape(nb, m, m)
    np.multiply(weights[:, CENTER], u, out=y)
    y[:, :-1, :] += weights[:, EAST, :-1, :] * u[:, 1:, :]
    y[:, 1:, :] += weights[:, WEST, 1:, :] * u[:, :-1, :]
    y[:, :, :-1] += weights[:, NORTH, :, :-1] * u[:, :, 1:]
    y[:, :, 1:] += weights[:, SOUTH, :, 1:] * u[:, :, :-1]
    return out


@njit(cache=True, parallel=True)
def _stencil5_kernel(weights, w, out):
    nb = weights.shape[0]
    m = weights.shape[2]
    for b in prange(nb):
        for i in range(m):
            for j in range(m):
                k = i * m + j
                acc = weights[b, 0, i, j] * w[b, k]
                if i + 1 < m:
                    acc += weights[b, 1, i, j] * w[b, k + m]
                if i > 0:
                    acc += weights[b, 2, i, j] * w[b, k - m]
                if j + 1 < m:
                    acc += weights[b, 3, i, j] * w[b, k + 1]
                if j > 0:
                    acc += weights[b, 4, i, j] * w[b, k - 1]
                out[b, k] = acc


def stencil5_apply_batch_numba(weights, w, out=None):
    """Numba version of :func:`stencil5_apply_batch_numpy`."""
    if out is None:
        out = np.empty((weights.shape[0], weights.shape[2] ** 2))
    _stencil5_kernel(np.ascontiguousarray(weights), np.ascontiguousarray(w), out)
    return out


if NUMBA_ENABLED:
    stencil5_apply_batch = stencil5_apply_batch_numba
else:
    stencil5_apply_batch = stencil5_apply_batch_numpy
