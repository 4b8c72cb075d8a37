r"""Galerkin system for parameterized matrix equations ``A(s) x(s) = b(s)``.

With a quadrature rule ``{(lambda_b, nu_b)}`` the Galerkin matrix factors as

$$
\langle \pi\pi^T \otimes A \rangle = (Q \otimes I)\,\mathrm{blkdiag}(A(\lambda_b))\,(Q \otimes I)^T,
\qquad Q_{\alpha b} = \sqrt{\nu_b}\,\pi_\alpha(\lambda_b),
$$

so a product with the Galerkin matrix needs only ``A(lambda_b) w`` at each
quadrature point.

Vectors of length ``N * n_terms`` stack the columns of the ``N x n_terms``
coefficient matrix ``X``; ``u.reshape(n_terms, N)`` is therefore ``X.T``.
All internal work is done in that transposed, row-major layout.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh

from .basis import eval_basis_matrix, eval_basis_vector
from .errors import (
    CapExceeded,
    MissingCapability,
    NotSymmetric,
    QuadratureTooCoarse,
    RankDeficient,
    SystemEvaluationError,
)

DEFAULT_ORTHOTOL = 1e-10
DEFAULT_DENSE_CAP = 5000
DENSE_EIG_MAX_N = 400


class ParameterizedSystem:
    """Interface for ``A(s)`` and ``b(s)`` on ``[-1, 1]^d``.

    Subclasses must set ``dim_parameters``, ``dim_state`` and ``symmetric`` and
    implement :meth:`apply` and :meth:`rhs`. :meth:`assemble` is optional.

    ``apply`` and ``rhs`` must be safe to call concurrently at distinct points.

    The batch hooks :meth:`prepare` / :meth:`apply_batch` let a system evaluate
    all quadrature points in one sweep; the defaults loop over :meth:`apply`.
    """

    dim_parameters: int
    dim_state: int
    symmetric: bool = False

    def apply(self, point, v):
        raise NotImplementedError

    def rhs(self, point):
        raise NotImplementedError

    def assemble(self, point):
        raise MissingCapability(f"{type(self).__name__} cannot assemble A(s) explicitly")

    @property
    def can_assemble(self):
        return type(self).assemble is not ParameterizedSystem.assemble

    def diagonal(self, point):
        """Diagonal of ``A(point)``; uses :meth:`assemble`."""
        return np.asarray(sp.csr_matrix(self.assemble(point)).diagonal()).ravel()

    def prepare(self, points):
        """Precompute per-point data for :meth:`apply_batch`; default keeps the points."""
        return np.asarray(points, dtype=float)

    def apply_batch(self, cache, w, threads=1):
        """Row ``b`` of the result is ``A(points[b]) @ w[b]``.

        Args:
            cache: value returned by :meth:`prepare`.
            w: array ``(n_points, N)``.
            threads: worker count for the default per-point loop.
        """
        points = cache
        out = np.empty_like(w)

        def one(b):
            try:
                out[b] = self.apply(points[b], w[b])
            except Exception as exc:
                raise SystemEvaluationError(points[b], exc) from exc

        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(one, range(len(points))))
        else:
            for b in range(len(points)):
                one(b)
        return out


# ---------------------------------------------------------------------------
# Q matrix


@dataclass(frozen=True, eq=False)
class BasisQuadMatrix:
    """``Q[alpha, b] = sqrt(nu_b) * pi_alpha(lambda_b)`` with its basis and rule."""

    Q: np.ndarray
    index_set: object
    rule: object
    orth_error: float

    @property
    def shape(self):
        return self.Q.shape


def build_basis_quad(index_set, rule, orthotol=DEFAULT_ORTHOTOL):
    """Build and validate ``Q``.

    Raises:
        RankDeficient: more basis terms than quadrature points.
        QuadratureTooCoarse: ``max|Q Q^T - I| > orthotol``.
    """
    if index_set.dim != rule.dim:
        raise ValueError(f"basis dimension {index_set.dim} != quadrature dimension {rule.dim}")
    if len(index_set) > len(rule):
        raise RankDeficient(
            f"{len(index_set)} basis polynomials but only {len(rule)} quadrature points"
        )
    Q = eval_basis_matrix(index_set, rule.points) * np.sqrt(rule.weights)[None, :]
    err = float(np.max(np.abs(Q @ Q.T - np.eye(len(index_set)))))
    if not err <= orthotol:
        raise QuadratureTooCoarse(
            f"max|QQ^T - I| = {err:.3e} exceeds {orthotol:.1e}; raise the quadrature order"
        )
    Q.setflags(write=False)
    return BasisQuadMatrix(Q, index_set, rule, err)


# ---------------------------------------------------------------------------
# operator


class GalerkinOperator:
    """Matrix-free Galerkin matrix ``(Q x I) A(lambda) (Q x I)^T``.

    Args:
        basisquad: the :class:`BasisQuadMatrix`.
        system: a :class:`ParameterizedSystem`.
        threads: worker count passed to the system's batch apply.
    """

    def __init__(self, basisquad, system, threads=1):
        if system.dim_parameters != basisquad.index_set.dim:
            raise ValueError(
                f"system has {system.dim_parameters} parameters, basis has {basisquad.index_set.dim}"
            )
        self.basisquad = basisquad
        self.system = system
        self.threads = threads
        self._cache = None
        self.n_matvecs = 0

    @property
    def Q(self):
        return self.basisquad.Q

    @property
    def points(self):
        return self.basisquad.rule.points

    @property
    def n_terms(self):
        return self.Q.shape[0]

    @property
    def N(self):
        return self.system.dim_state

    @property
    def size(self):
        return self.N * self.n_terms

    @property
    def cache(self):
        if self._cache is None:
            self._cache = self.system.prepare(self.points)
        return self._cache

    def to_quadrature(self, u):
        """Step 1: ``W^T = Q^T U^T``, one row per quadrature point."""
        return self.Q.T @ u.reshape(self.n_terms, self.N)

    def from_quadrature(self, yt):
        """Step 3: ``V^T = Q Y^T``, flattened to the stacked-column vector."""
        return (self.Q @ yt).ravel()

    def point_products(self, wt):
        """Step 2: ``y_b = A(lambda_b) w_b`` for every quadrature point."""
        try:
            return self.system.apply_batch(self.cache, wt, threads=self.threads)
        except SystemEvaluationError:
            raise
        except Exception as exc:
            # locate the offending point
            for b, point in enumerate(self.points):
                try:
                    self.system.apply(point, wt[b])
                except Exception as inner:
                    raise SystemEvaluationError(point, inner) from inner
            raise

    def matvec(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            raise ValueError(f"expected vector of length {self.size}, got shape {u.shape}")
        self.n_matvecs += 1
        return self.from_quadrature(self.point_products(self.to_quadrature(u)))

    __call__ = matvec

    def as_linear_operator(self):
        return LinearOperator((self.size, self.size), matvec=self.matvec, dtype=float)


def galerkin_matvec(op, u):
    """Galerkin matrix times ``u`` via the three-step quadrature sweep."""
    return op.matvec(u)


def assemble_rhs(op):
    """Stacked blocks ``<b pi_alpha>`` as ``(Q x I)`` applied to ``sqrt(nu_b) b(lambda_b)``."""
    system = op.system
    sqrt_w = np.sqrt(op.basisquad.rule.weights)
    bt = np.empty((len(op.points), op.N))
    for b, point in enumerate(op.points):
        try:
            bt[b] = system.rhs(point)
        except Exception as exc:
            raise SystemEvaluationError(point, exc) from exc
    return op.from_quadrature(bt * sqrt_w[:, None])


def _dense(matrix):
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)


def assemble_dense_galerkin(op, cap=DEFAULT_DENSE_CAP):
    """Dense Galerkin matrix by direct quadrature summation.

    ``sum_b [pi(l_b) pi(l_b)^T kron A(l_b)] nu_b``; for testing small instances.

    Raises:
        CapExceeded: ``N * n_terms > cap``.
        MissingCapability: the system cannot assemble.
    """
    if op.size > cap:
        raise CapExceeded(f"dense Galerkin matrix of size {op.size} exceeds cap {cap}")
    if not op.system.can_assemble:
        raise MissingCapability(f"{type(op.system).__name__} cannot assemble A(s)")
    rule = op.basisquad.rule
    P = eval_basis_matrix(op.basisquad.index_set, rule.points)
    n, N = op.n_terms, op.N
    G = np.zeros((n, N, n, N))
    for b, point in enumerate(rule.points):
        A = _dense(op.system.assemble(point))
        outer = np.outer(P[:, b], P[:, b]) * rule.weights[b]
        G += outer[:, None, :, None] * A[None, :, None, :]
    return G.reshape(n * N, n * N)


def _point_extremes(system, point, tol):
    N = system.dim_state
    if system.can_assemble and N <= DENSE_EIG_MAX_N:
        ev = np.linalg.eigvalsh(_dense(system.assemble(point)))
        return ev[0], ev[-1]
    if N <= 2:
        A = np.column_stack([system.apply(point, e) for e in np.eye(N)])
        ev = np.linalg.eigvalsh(0.5 * (A + A.T))
        return ev[0], ev[-1]
    lin = LinearOperator((N, N), matvec=lambda v: system.apply(point, v), dtype=float)
    v0 = np.ones(N)
    hi = eigsh(lin, k=1, which="LA", tol=tol, v0=v0, return_eigenvectors=False)[0]
    lo = eigsh(lin, k=1, which="SA", tol=tol, v0=v0, return_eigenvectors=False)[0]
    return lo, hi


def eigenvalue_bounds(op, tol=1e-8):
    """Interval containing every eigenvalue of a symmetric Galerkin matrix.

    Returns ``(min_b theta_min(A(l_b)), max_b theta_max(A(l_b)))``.

    Raises:
        NotSymmetric: the system is not declared symmetric.
    """
    if not op.system.symmetric:
        raise NotSymmetric("eigenvalue bounds need a system declared symmetric")
    lower, upper = np.inf, -np.inf
    for point in op.points:
        lo, hi = _point_extremes(op.system, point, tol)
        lower = min(lower, lo)
        upper = max(upper, hi)
    return float(lower), float(upper)


# ---------------------------------------------------------------------------
# solution


@dataclass
class GalerkinSolution:
    """Coefficients ``X`` (``N x n_terms``; column ``alpha`` multiplies ``pi_alpha``)."""

    coefficients: np.ndarray
    index_set: object
    residual_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    method: str = ""
    precond: str = "none"
    relative_residual: float = float("nan")

    @classmethod
    def from_vector(cls, x, index_set, **kwargs):
        n = len(index_set)
        return cls(np.asarray(x, dtype=float).reshape(n, -1).T.copy(), index_set, **kwargs)

    @property
    def vector(self):
        return self.coefficients.T.ravel()

    def evaluate(self, s):
        return evaluate_surrogate(self, s)

    def moments(self):
        return moments(self)


def evaluate_surrogate(sol, s):
    """``X pi(s)``."""
    return sol.coefficients @ eval_basis_vector(sol.index_set, s)


def moments(sol):
    """Mean and variance of the surrogate under the uniform measure.

    The basis is orthonormal and starts with the constant, so the mean is
    column 0 and the variance the row-wise sum of squares of the rest.
    """
    X = sol.coefficients
    return X[:, 0].copy(), np.sum(X[:, 1:] ** 2, axis=1)
