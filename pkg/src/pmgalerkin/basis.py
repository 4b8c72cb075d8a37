r"""Multi-index sets, orthonormal Legendre polynomials and Gauss-Legendre rules.

The weight on each parameter is the uniform probability density ``1/2`` on
``[-1, 1]``, so the univariate polynomials satisfy

$$
\int_{-1}^{1} \pi_j(s)\,\pi_k(s)\,\frac{ds}{2} = \delta_{jk}, \qquad \pi_0 \equiv 1,
$$

and quadrature weights sum to one.
"""
from dataclasses import dataclass, field
from itertools import product
from math import comb, prod

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import PointCapExceeded

DEFAULT_POINT_CAP = 10**8


def _legendre_offdiag(k):
    """Jacobi-matrix off-diagonal entries ``b_1..b_k`` of the normalized Legendre family."""
    n = np.arange(1, k + 1, dtype=float)
    return n / np.sqrt(4.0 * n * n - 1.0)


# ---------------------------------------------------------------------------
# multi-index sets


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """Ordered set of multi-indices defining a polynomial basis.

    Indices are kept in graded lexicographic order (total degree first, then
    lexicographic), so row 0 is always the zero multi-index.

    Attributes:
        indices: integer array of shape ``(n_terms, dim)``.
        kind: ``"total_degree"``, ``"tensor"`` or ``"explicit"``.
        params: construction parameters, used for headers in output files.
    """

    indices: np.ndarray
    kind: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[1] < 1:
            raise ValueError("indices must be a 2-d array with at least one column")
        if np.any(idx < 0):
            raise ValueError("multi-index entries must be nonnegative")
        order = sorted(range(len(idx)), key=lambda r: (int(idx[r].sum()), tuple(idx[r])))
        idx = idx[order]
        if len({tuple(r) for r in idx}) != len(idx):
            raise ValueError("duplicate multi-indices")
        if len(idx) == 0 or np.any(idx[0] != 0):
            raise ValueError("the zero multi-index must be present")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def dim(self):
        return self.indices.shape[1]

    def __len__(self):
        return self.indices.shape[0]

    def __iter__(self):
        return (tuple(int(a) for a in row) for row in self.indices)

    @property
    def max_degrees(self):
        """Largest univariate degree used in each dimension."""
        return self.indices.max(axis=0)

    def position(self, alpha):
        """Row of multi-index ``alpha``; raises ``KeyError`` if absent."""
        alpha = tuple(alpha)
        for r, row in enumerate(self):
            if row == alpha:
                return r
        raise KeyError(alpha)

    def describe(self):
        """One-line description used in file headers."""
        if self.kind == "total_degree":
            return f"total_degree n={self.params['n']}"
        if self.kind == "tensor":
            return "tensor orders=" + ",".join(str(o) for o in self.params["orders"])
        return "explicit"


def total_degree_set(d, n):
    """All multi-indices in ``d`` dimensions with entry sum at most ``n``."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    rows = [a for a in product(range(n + 1), repeat=d) if sum(a) <= n]
    out = MultiIndexSet(np.array(rows, dtype=np.int64), "total_degree", {"n": n, "d": d})
    assert len(out) == comb(n + d, n)
    return out


def anisotropic_tensor_set(orders):
    """Full tensor set with ``alpha_i <= orders[i]`` componentwise."""
    orders = [int(o) for o in orders]
    if not orders:
        raise ValueError("order list must not be empty")
    if any(o < 0 for o in orders):
        raise ValueError("orders must be nonnegative")
    rows = list(product(*(range(o + 1) for o in orders)))
    return MultiIndexSet(np.array(rows, dtype=np.int64), "tensor", {"orders": tuple(orders)})


def explicit_set(indices):
    """Basis from an explicit list of multi-indices (reordered graded-lex)."""
    return MultiIndexSet(np.atleast_2d(np.asarray(indices, dtype=np.int64)), "explicit", {})


# ---------------------------------------------------------------------------
# orthonormal Legendre polynomials


def legendre_table(kmax, s):
    """Values of ``pi_0..pi_kmax`` at the points ``s``.

    Uses the three-term recurrence in normalized form,
    ``s pi_k = b_{k+1} pi_{k+1} + b_k pi_{k-1}`` with ``b_k = k / sqrt(4k^2 - 1)``.

    Args:
        kmax: highest degree.
        s: array of points, any shape.

    Returns:
        Array of shape ``s.shape + (kmax + 1,)``.
    """
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape + (kmax + 1,))
    out[..., 0] = 1.0
    if kmax == 0:
        return out
    b = _legendre_offdiag(kmax)
    out[..., 1] = s / b[0]
    for k in range(1, kmax):
        out[..., k + 1] = (s * out[..., k] - b[k - 1] * out[..., k - 1]) / b[k]
    return out


def eval_orthonormal_legendre(k, s):
    """Degree-``k`` orthonormal Legendre polynomial at ``s``."""
    if k < 0:
        raise ValueError("degree must be nonnegative")
    vals = legendre_table(k, s)[..., k]
    return float(vals) if np.ndim(vals) == 0 else vals


def eval_basis_matrix(index_set, points):
    """Basis values at many points.

    Args:
        index_set: the :class:`MultiIndexSet`.
        points: array ``(n_points, dim)``.

    Returns:
        Array ``(n_terms, n_points)`` with entry ``[alpha, p] = pi_alpha(points[p])``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != index_set.dim:
        raise ValueError(
            f"point dimension {points.shape[1]} does not match basis dimension {index_set.dim}"
        )
    kmax = index_set.max_degrees
    out = np.ones((len(index_set), points.shape[0]))
    for i in range(index_set.dim):
        table = legendre_table(int(kmax[i]), points[:, i])  # (n_points, kmax+1)
        out *= table[:, index_set.indices[:, i]].T
    return out


def eval_basis_vector(index_set, s):
    """The vector of basis values ``pi(s)`` in the set's ordering."""
    s = np.asarray(s, dtype=float).ravel()
    if s.shape[0] != index_set.dim:
        raise ValueError(f"point has dimension {s.shape[0]}, basis has {index_set.dim}")
    return eval_basis_matrix(index_set, s[None, :])[:, 0]


# ---------------------------------------------------------------------------
# quadrature


def gauss_legendre_rule(m):
    """``m``-point Gauss-Legendre rule for the uniform probability density.

    Golub-Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
    matrix, weights the squared first components of its eigenvectors.

    Returns:
        ``(points, weights)``, points ascending, weights summing to 1.
    """
    m = int(m)
    if m < 1:
        raise ValueError("rule needs at least one point")
    if m == 1:
        return np.zeros(1), np.ones(1)
    x, v = eigh_tridiagonal(np.zeros(m), _legendre_offdiag(m - 1))
    w = v[0, :] ** 2
    # exact symmetry of the rule about the origin
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w / w.sum()


@dataclass(frozen=True, eq=False)
class TensorQuadrature:
    """Tensor-product Gauss-Legendre rule on ``[-1, 1]^d``.

    Points are ordered with the last dimension varying fastest.
    """

    orders: tuple
    points: np.ndarray
    weights: np.ndarray

    @property
    def dim(self):
        return len(self.orders)

    def __len__(self):
        return self.points.shape[0]


def tensor_rule(orders, cap=DEFAULT_POINT_CAP):
    """Full tensor product of univariate Gauss-Legendre rules.

    Raises:
        PointCapExceeded: if ``prod(orders)`` exceeds ``cap``.
    """
    orders = tuple(int(o) for o in orders)
    if not orders:
        raise ValueError("order list must not be empty")
    if any(o < 1 for o in orders):
        raise ValueError("quadrature orders must be >= 1")
    count = prod(orders)
    if count > cap:
        raise PointCapExceeded(f"tensor rule with orders {orders} has {count} points > cap {cap}")
    rules = [gauss_legendre_rule(o) for o in orders]
    grids = np.meshgrid(*(r[0] for r in rules), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*(r[1] for r in rules), indexing="ij")
    weights = np.ones(count)
    for g in wgrids:
        weights *= g.ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return TensorQuadrature(orders, points, weights)
