"""Built-in parameterized systems.

* :func:`affine_system` - seeded ``A0 + sum_k A_k s_k`` fixtures.
* :func:`kl_decompose` / :func:`diffusion_system` - ``-div(a grad u) = 1`` on
  the unit square with a log-normal-like Karhunen-Loeve coefficient.
* :func:`advection_diffusion_system` - nonsymmetric upwind advection-diffusion
  with parameterized velocity and diffusivity.

The PDE systems are scaled by ``h^2`` so matrix entries are O(1).
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm
from scipy.spatial.distance import cdist

from .galerkin import ParameterizedSystem
from .kernels import CENTER, EAST, NORTH, SOUTH, WEST, stencil5_apply_batch

# stencil weights for at most this many bytes are cached across matvecs
CACHE_BYTES = 512 * 2**20


# ---------------------------------------------------------------------------
# affine fixtures


class AffineSystem(ParameterizedSystem):
    """``A(s) = A0 + sum_k s_k A_k``, ``b(s) = b0 + sum_k s_k b_k``."""

    def __init__(self, A0, A_terms, b0, b_terms, symmetric=False):
        self.A0 = sp.csr_matrix(A0, dtype=float)
        self.A_terms = [sp.csr_matrix(A, dtype=float) for A in A_terms]
        self.b0 = np.asarray(b0, dtype=float).ravel()
        self.b_terms = [np.asarray(b, dtype=float).ravel() for b in b_terms]
        self.dim_state = self.A0.shape[0]
        self.dim_parameters = max(len(self.A_terms), len(self.b_terms))
        # pad so every parameter has a (possibly zero) term
        while len(self.A_terms) < self.dim_parameters:
            self.A_terms.append(sp.csr_matrix((self.dim_state, self.dim_state)))
        while len(self.b_terms) < self.dim_parameters:
            self.b_terms.append(np.zeros(self.dim_state))
        self.symmetric = bool(symmetric)

    def _check(self, point):
        point = np.asarray(point, dtype=float).ravel()
        if point.shape[0] != self.dim_parameters:
            raise ValueError(f"expected {self.dim_parameters} parameters, got {point.shape[0]}")
        return point

    def assemble(self, point):
        point = self._check(point)
        A = self.A0.copy()
        for s, Ak in zip(point, self.A_terms):
            A = A + s * Ak
        return A.tocsr()

    def apply(self, point, v):
        point = self._check(point)
        y = self.A0 @ v
        for s, Ak in zip(point, self.A_terms):
            y = y + s * (Ak @ v)
        return y

    def rhs(self, point):
        point = self._check(point)
        b = self.b0.copy()
        for s, bk in zip(point, self.b_terms):
            b += s * bk
        return b

    def apply_batch(self, cache, w, threads=1):
        points = cache
        y = (self.A0 @ w.T).T
        for k, Ak in enumerate(self.A_terms):
            if Ak.nnz:
                y += points[:, k : k + 1] * (Ak @ w.T).T
        return y


def affine_system(N, d, seed=0, spd=True):
    """Seeded affine fixture.

    ``N = d = 1`` returns the canonical scalar system ``A(s) = 2 + s``,
    ``b(s) = 1`` regardless of the seed.

    In ``spd`` mode ``A0 = (1 + sum_k ||A_k||_1) I + S`` with ``S`` symmetric
    positive semidefinite, so ``A(s)`` is SPD on the whole hypercube.
    Otherwise ``A(s)`` is nonsymmetric and diagonally dominated by ``A0``.
    """
    if N < 1 or d < 1:
        raise ValueError("N and d must be >= 1")
    if N == 1 and d == 1:
        return AffineSystem([[2.0]], [[[1.0]]], [1.0], [[0.0]], symmetric=True)
    rng = np.random.default_rng(seed)
    density = min(1.0, 3.0 / N)
    terms = []
    for _ in range(d):
        R = sp.random(N, N, density=density, random_state=rng, data_rvs=rng.standard_normal)
        if spd:
            R = 0.5 * (R + R.T)
        terms.append(R.tocsr() * 0.5)
    shift = 1.0 + sum(sparse_norm(A, 1) for A in terms)
    if spd:
        B = sp.random(N, N, density=density, random_state=rng, data_rvs=rng.standard_normal)
        S = (B @ B.T) / max(1, N)
    else:
        S = sp.random(N, N, density=density, random_state=rng, data_rvs=rng.standard_normal)
        S = S * (0.5 / max(1.0, sparse_norm(S, 1)))
    A0 = (shift * sp.identity(N) + S).tocsr()
    b0 = rng.standard_normal(N)
    b_terms = [0.5 * rng.standard_normal(N) for _ in range(d)]
    return AffineSystem(A0, terms, b0, b_terms, symmetric=spd)


def identity_system(N, d, b0=None, b_terms=None, seed=0):
    """``A(s) = I`` with an affine right-hand side (random if not given)."""
    rng = np.random.default_rng(seed)
    b0 = rng.standard_normal(N) if b0 is None else b0
    if b_terms is None:
        b_terms = [rng.standard_normal(N) for _ in range(d)]
    zeros = [sp.csr_matrix((N, N)) for _ in range(d)]
    return AffineSystem(sp.identity(N), zeros, b0, b_terms, symmetric=True)


# ---------------------------------------------------------------------------
# Karhunen-Loeve field


def unit_square_grid(n):
    """``n x n`` nodes covering ``[0, 1]^2`` including the boundary; shape ``(n*n, 2)``."""
    x = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True, eq=False)
class KLField:
    """Truncated KL expansion ``log a(x, s) = scale * sum_k sigma_k psi_k(x) s_k``.

    Attributes:
        nodes: ``(n_nodes, 2)`` grid coordinates.
        grid_shape: ``(nx, ny)``; node ``(i, j)`` is row ``i * ny + j``.
        sigma: square roots of the retained covariance eigenvalues, descending.
        modes: ``(n_nodes, d)`` discrete-orthonormal eigenvectors.
        eigenvalues: full covariance spectrum, descending, clipped at zero.
        scale: multiplier in front of the expansion.
    """

    nodes: np.ndarray
    grid_shape: tuple
    sigma: np.ndarray
    modes: np.ndarray
    eigenvalues: np.ndarray
    scale: float = 2.0

    @property
    def d(self):
        return self.sigma.shape[0]

    @property
    def energy_fractions(self):
        """Cumulative eigenvalue fraction captured by the first ``k`` modes, ``k = 1..d``."""
        return np.cumsum(self.eigenvalues[: self.d]) / self.eigenvalues.sum()

    def spectrum_fractions(self, count=None):
        """Cumulative eigenvalue fractions for the first ``count`` modes of the full spectrum."""
        count = len(self.eigenvalues) if count is None else count
        return np.cumsum(self.eigenvalues[:count]) / self.eigenvalues.sum()

    def sigma_fractions(self, count=None):
        """Cumulative fraction of ``sum_k sigma_k`` (amplitude, not variance)."""
        s = np.sqrt(self.eigenvalues)
        count = len(s) if count is None else count
        return np.cumsum(s[:count]) / s.sum()

    def log_coefficient(self, points):
        """``log a`` at the nodes for each row of ``points``; shape ``(n_points, n_nodes)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.scale * (points * self.sigma[None, :]) @ self.modes.T

    def coefficient(self, points):
        return np.exp(self.log_coefficient(points))


def kl_decompose(n, d, variance=2.0, corr_length_sq=2.0, scale=2.0):
    """KL modes of ``C(x, y) = variance * exp(-|x - y|^2 / corr_length_sq)`` on an ``n x n`` grid.

    The dense node covariance matrix is eigendecomposed and the top ``d``
    modes kept. Each mode's sign is fixed so its largest-magnitude entry is
    positive.
    """
    nodes = unit_square_grid(n)
    if not 1 <= d <= len(nodes):
        raise ValueError(f"need 1 <= d <= {len(nodes)}, got {d}")
    C = variance * np.exp(-cdist(nodes, nodes, "sqeuclidean") / corr_length_sq)
    evals, evecs = np.linalg.eigh(C)
    evals = np.clip(evals[::-1], 0.0, None)
    evecs = evecs[:, ::-1][:, :d]
    flip = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(d)])
    evecs = evecs * flip[None, :]
    return KLField(nodes, (n, n), np.sqrt(evals[:d]), evecs, evals, float(scale))


def zero_field(n, d):
    """A field with ``a == 1`` everywhere (useful for the plain Laplacian)."""
    nodes = unit_square_grid(n)
    return KLField(nodes, (n, n), np.zeros(d), np.zeros((len(nodes), d)), np.ones(1), 0.0)


# ---------------------------------------------------------------------------
# five-point stencil systems


def _stencil_to_csr(weights):
    """Sparse matrix of one ``(5, m, m)`` stencil."""
    m = weights.shape[1]
    idx = np.arange(m * m).reshape(m, m)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [weights[CENTER].ravel()]
    for which, sl_self, sl_nb in (
        (EAST, (slice(0, -1), slice(None)), (slice(1, None), slice(None))),
        (WEST, (slice(1, None), slice(None)), (slice(0, -1), slice(None))),
        (NORTH, (slice(None), slice(0, -1)), (slice(None), slice(1, None))),
        (SOUTH, (slice(None), slice(1, None)), (slice(None), slice(0, -1))),
    ):
        rows.append(idx[sl_self].ravel())
        cols.append(idx[sl_nb].ravel())
        vals.append(weights[which][sl_self].ravel())
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * m, m * m)
    )
    return A.tocsr()


class StencilSystem(ParameterizedSystem):
    """Base for systems defined by per-point five-point stencil weights.

    Subclasses implement ``stencil_weights(points) -> (n_points, 5, m, m)``.
    """

    m: int

    def _points(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim_parameters:
            raise ValueError(f"expected {self.dim_parameters} parameters, got {points.shape[1]}")
        return points

    def apply(self, point, v):
        weights = self.stencil_weights(self._points(point))
        return stencil5_apply_batch(weights, np.asarray(v, dtype=float)[None, :])[0]

    def assemble(self, point):
        return _stencil_to_csr(self.stencil_weights(self._points(point))[0])

    def diagonal(self, point):
        return self.stencil_weights(self._points(point))[0, CENTER].ravel().copy()

    def rhs(self, point):
        return np.full(self.dim_state, self.h**2)

    def _chunk(self):
        per_point = 5 * self.dim_state * 8
        return max(1, CACHE_BYTES // per_point)

    def prepare(self, points):
        points = self._points(points)
        if len(points) <= self._chunk():
            return points, self.stencil_weights(points)
        return points, None

    def apply_batch(self, cache, w, threads=1):
        points, weights = cache
        if weights is not None:
            return stencil5_apply_batch(weights, w)
        out = np.empty_like(w)
        step = self._chunk()
        for start in range(0, len(points), step):
            sl = slice(start, start + step)
            stencil5_apply_batch(self.stencil_weights(points[sl]), w[sl], out[sl])
        return out


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


class DiffusionSystem(StencilSystem):
    """``-div(a grad u) = 1`` on ``[0,1]^2``, ``u = 0`` on the boundary, times ``h^2``.

    The interior grid is ``m x m`` with ``h = 1/(m+1)``; the field lives on the
    ``(m+2) x (m+2)`` nodes including the boundary. Face coefficients are
    harmonic means of the adjacent node values.
    """

    symmetric = True

    def __init__(self, m, field):
        if field.grid_shape != (m + 2, m + 2):
            raise ValueError(f"field grid {field.grid_shape} does not match interior size {m}")
        self.m = m
        self.h = 1.0 / (m + 1)
        self.field = field
        self.dim_state = m * m
        self.dim_parameters = field.d

    def stencil_weights(self, points):
        m = self.m
        a = self.field.coefficient(points).reshape(-1, m + 2, m + 2)
        assert np.all(a > 0), "diffusion coefficient must be positive"
        ax = _harmonic(a[:, :-1, 1:-1], a[:, 1:, 1:-1])  # faces i+1/2, shape (P, m+1, m)
        ay = _harmonic(a[:, 1:-1, :-1], a[:, 1:-1, 1:])  # faces j+1/2, shape (P, m, m+1)
        w = np.empty((len(a), 5, m, m))
        w[:, EAST] = -ax[:, 1:, :]
        w[:, WEST] = -ax[:, :-1, :]
        w[:, NORTH] = -ay[:, :, 1:]
        w[:, SOUTH] = -ay[:, :, :-1]
        w[:, CENTER] = ax[:, 1:, :] + ax[:, :-1, :] + ay[:, :, 1:] + ay[:, :, :-1]
        return w


def diffusion_system(m, field=None, d=4, scale=2.0):
    """Diffusion system on an ``m x m`` interior grid (KL field built if not given)."""
    if field is None:
        field = kl_decompose(m + 2, d, scale=scale)
    return DiffusionSystem(m, field)


class AdvectionDiffusionSystem(StencilSystem):
    """Steady ``-div(G grad phi) + v . grad phi = 1`` with ``phi = 0`` on the boundary, times ``h^2``.

    The first ``n_vel`` parameters scale streamfunction modes
    ``sin(k pi x) sin(k pi y) / k`` (velocity ``(d psi/dy, -d psi/dx)``); the
    remaining ones perturb ``G = 0.1 exp(0.5 sum_j s_j phi_j)`` with fixed
    smooth ``phi_j``.
    """

    symmetric = False
    base_diffusivity = 0.1

    def __init__(self, m, d=6, upwind=True):
        if not 2 <= d <= 6:
            raise ValueError("advection-diffusion supports 2 <= d <= 6")
        self.m = m
        self.h = 1.0 / (m + 1)
        self.dim_state = m * m
        self.dim_parameters = d
        self.n_vel = min(3, d - 1)
        self.upwind = upwind
        x = np.arange(1, m + 1) * self.h
        self._x, self._y = np.meshgrid(x, x, indexing="ij")

    @staticmethod
    def _diff_modes(x, y):
        return [np.cos(np.pi * x), np.cos(np.pi * y), np.cos(np.pi * x) * np.cos(np.pi * y)]

    def velocity(self, points, x=None, y=None):
        """Velocity components ``(vx, vy)`` at the nodes, each ``(n_points,) + x.shape``."""
        points = self._points(points)
        x = self._x if x is None else x
        y = self._y if y is None else y
        vx = np.zeros((len(points),) + np.shape(x))
        vy = np.zeros_like(vx)
        for k in range(1, self.n_vel + 1):
            s = points[:, k - 1].reshape((-1,) + (1,) * np.ndim(x))
            kp = k * np.pi
            vx += s * (np.pi * np.sin(kp * x) * np.cos(kp * y))
            vy -= s * (np.pi * np.cos(kp * x) * np.sin(kp * y))
        return vx, vy

    def diffusivity(self, points, x, y):
        points = self._points(points)
        expo = np.zeros((len(points),) + np.shape(x))
        for j, phi in enumerate(self._diff_modes(x, y)[: self.dim_parameters - self.n_vel]):
            s = points[:, self.n_vel + j].reshape((-1,) + (1,) * np.ndim(x))
            expo += s * phi
        return self.base_diffusivity * np.exp(0.5 * expo)

    def discrete_divergence(self, point):
        """Central-difference divergence of the nodal velocity on a grid padded by one node."""
        h = self.h
        x = np.arange(0, self.m + 2) * h
        X, Y = np.meshgrid(x, x, indexing="ij")
        vx, vy = self.velocity(point, X, Y)
        vx, vy = vx[0], vy[0]
        return (vx[2:, 1:-1] - vx[:-2, 1:-1]) / (2 * h) + (vy[1:-1, 2:] - vy[1:-1, :-2]) / (2 * h)

    def stencil_weights(self, points):
        points = self._points(points)
        m, h = self.m, self.h
        xf = np.arange(0, m + 1) * h + 0.5 * h
        xc = np.arange(1, m + 1) * h
        # diffusivity at x-faces (i+1/2, j) and y-faces (i, j+1/2)
        gx = self.diffusivity(points, *np.meshgrid(xf, xc, indexing="ij"))
        gy = self.diffusivity(points, *np.meshgrid(xc, xf, indexing="ij"))
        vx, vy = self.velocity(points)
        w = np.empty((len(points), 5, m, m))
        w[:, EAST] = -gx[:, 1:, :]
        w[:, WEST] = -gx[:, :-1, :]
        w[:, NORTH] = -gy[:, :, 1:]
        w[:, SOUTH] = -gy[:, :, :-1]
        w[:, CENTER] = gx[:, 1:, :] + gx[:, :-1, :] + gy[:, :, 1:] + gy[:, :, :-1]
        if self.upwind:
            px, nx = np.maximum(vx, 0.0) * h, np.minimum(vx, 0.0) * h
            py, ny = np.maximum(vy, 0.0) * h, np.minimum(vy, 0.0) * h
            w[:, CENTER] += px - nx + py - ny
            w[:, WEST] -= px
            w[:, EAST] += nx
            w[:, SOUTH] -= py
            w[:, NORTH] += ny
        else:
            w[:, EAST] += 0.5 * h * vx
            w[:, WEST] -= 0.5 * h * vx
            w[:, NORTH] += 0.5 * h * vy
            w[:, SOUTH] -= 0.5 * h * vy
        return w


def advection_diffusion_system(m, d=6, upwind=True):
    return AdvectionDiffusionSystem(m, d, upwind)
