"""Block-diagonal preconditioners ``I kron P^{-1}`` and parameter-point selection.

One ``N x N`` matrix ``P`` is factorized once and applied to every
``N``-block of a Galerkin vector. Choices of ``P``:

``none``, ``midpoint`` (``A(0)``), ``mean`` (quadrature mean of ``A``),
``random`` (``A`` at a seeded uniform draw), ``largest_eig`` /
``smallest_eig`` (``A`` at the candidate point with the extreme eigenvalue),
``fixed_point`` and ``diagonal`` (``diag A(point)``, midpoint by default).
"""
import logging
import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .basis import tensor_rule
from .errors import MissingCapability, NotSymmetric, SingularPreconditioner

logger = logging.getLogger(__name__)

KINDS = (
    "none",
    "midpoint",
    "mean",
    "random",
    "largest_eig",
    "smallest_eig",
    "fixed_point",
    "diagonal",
)
# dense factorization up to this N, sparse LU above
DENSE_FACTOR_MAX_N = 3000
DEFAULT_CANDIDATE_CAP = 2048


@dataclass
class PreconditionerSpec:
    kind: str = "none"
    order: int = 2
    seed: int = 0
    point: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown preconditioner kind {self.kind!r}; choose from {KINDS}")

    @property
    def label(self):
        if self.kind == "mean":
            return f"mean(order {self.order})"
        if self.kind == "random":
            return f"random(seed {self.seed})"
        return self.kind


@dataclass
class PointSelectionReport:
    point: np.ndarray
    estimate: float
    n_candidates: int
    iterations: int
    stagnated: int = 0
    skipped: int = 0


class BlockPreconditioner:
    """Factorized ``P`` applied blockwise, i.e. ``(I kron P^{-1}) v``.

    Args:
        P: dense or sparse ``N x N`` matrix, or a 1-d array for a diagonal ``P``.
        symmetric: use Cholesky (requires SPD) instead of LU.
        label: name used in reports.
    """

    def __init__(self, P, symmetric=False, label="custom"):
        self.label = label
        self.symmetric = symmetric
        self.point = None
        self.selection = None
        self._diag = None
        self._dense = None
        self._lu = None
        try:
            if np.ndim(P) == 1:
                diag = np.asarray(P, dtype=float)
                if np.any(diag == 0) or not np.all(np.isfinite(diag)):
                    raise SingularPreconditioner("diagonal preconditioner has zero entries")
                self._diag = diag
                self.N = diag.shape[0]
                # a positive diagonal keeps the preconditioner SPD
                self.symmetric = bool(np.all(diag > 0))
                return
            self.N = P.shape[0]
            if self.N <= DENSE_FACTOR_MAX_N:
                dense = P.toarray() if sp.issparse(P) else np.asarray(P, dtype=float)
                if symmetric:
                    self._dense = ("cho", sla.cho_factor(dense, lower=True, check_finite=True))
                else:
                    with warnings.catch_warnings():
                        warnings.simplefilter("error", sla.LinAlgWarning)
                        lu = sla.lu_factor(dense, check_finite=True)
                    if np.any(np.diag(lu[0]) == 0):
                        raise SingularPreconditioner("singular preconditioner matrix")
                    self._dense = ("lu", lu)
            else:
                self._lu = splu(sp.csc_matrix(P))
        except (np.linalg.LinAlgError, sla.LinAlgWarning, ValueError, RuntimeError) as exc:
            raise SingularPreconditioner(f"cannot factorize preconditioner {label}: {exc}") from exc

    def solve_blocks(self, vt):
        """``P^{-1}`` applied to each row of ``vt`` (shape ``(n_blocks, N)``)."""
        if self._diag is not None:
            return vt / self._diag[None, :]
        if self._dense is not None:
            kind, fact = self._dense
            if kind == "cho":
                return sla.cho_solve(fact, vt.T, check_finite=False).T
            return sla.lu_solve(fact, vt.T, check_finite=False).T
        return self._lu.solve(np.ascontiguousarray(vt.T)).T

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return self.solve_blocks(v.reshape(-1, self.N)).ravel()

    apply = __call__


def apply_block_preconditioner(factorization, v):
    """``(I kron P^{-1}) v`` for a :class:`BlockPreconditioner`."""
    return factorization(v)


# ---------------------------------------------------------------------------
# point selection


def candidate_points(rule, cap=DEFAULT_CANDIDATE_CAP, seed=0):
    """Quadrature points followed by all ``2^d`` corners of the hypercube.

    When the union exceeds ``cap`` a seeded subsample is kept; the corners
    are listed in binary order with ``-1`` first.
    """
    d = rule.dim
    corners = np.array(np.meshgrid(*([[-1.0, 1.0]] * d), indexing="ij")).reshape(d, -1).T
    cands = np.vstack([np.asarray(rule.points), corners])
    if len(cands) > cap:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(cands), size=cap, replace=False))
        cands = cands[keep]
    return cands


def _power_method(apply, N, iters, tol, rng):
    v = rng.standard_normal(N)
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, iters + 1):
        w = apply(v)
        new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0, it, True
        v = w / nrm
        if it > 1 and abs(new - est) <= tol * abs(new):
            return new, it, True
        est = new
    return est, iters, False


def find_largest_eig_point(system, rule, power_iters=100, tol=1e-6, cap=DEFAULT_CANDIDATE_CAP, seed=0):
    """Candidate maximizing the power-method estimate of ``theta_max(A(point))``."""
    if not system.symmetric:
        raise NotSymmetric("largest-eigenvalue point search needs a symmetric system")
    cands = candidate_points(rule, cap, seed)
    best, best_est, total, stagnated = None, -np.inf, 0, 0
    for point in cands:
        rng = np.random.default_rng(seed)
        est, it, ok = _power_method(lambda v: system.apply(point, v), system.dim_state, power_iters, tol, rng)
        total += it
        stagnated += not ok
        if est > best_est:
            best, best_est = point, est
    if stagnated:
        warnings.warn(f"power method did not converge at {stagnated} of {len(cands)} candidates")
    return PointSelectionReport(np.array(best), float(best_est), len(cands), total, stagnated)


def _inverse_iteration(system, point, iters, tol, rng):
    A = system.assemble(point)
    N = system.dim_state
    if N <= DENSE_FACTOR_MAX_N:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        fact = sla.cho_factor(dense, lower=True)
        solve = lambda v: sla.cho_solve(fact, v, check_finite=False)  # noqa: E731
    else:
        lu = splu(sp.csc_matrix(A))
        solve = lu.solve
    v = rng.standard_normal(N)
    v /= np.linalg.norm(v)
    est = np.inf
    for it in range(1, iters + 1):
        w = solve(v)
        mu = float(v @ w)  # Rayleigh quotient of A^{-1}
        v = w / np.linalg.norm(w)
        new = 1.0 / mu
        if it > 1 and abs(new - est) <= tol * abs(new):
            return new, it, True
        est = new
    return est, iters, False


def find_smallest_eig_point(system, rule, tol=1e-6, iters=100, cap=DEFAULT_CANDIDATE_CAP, seed=0):
    """Candidate minimizing ``theta_min(A(point))`` by inverse iteration.

    Candidates whose matrix cannot be Cholesky-factorized are skipped and
    counted in the report.
    """
    if not system.symmetric:
        raise NotSymmetric("smallest-eigenvalue point search needs a symmetric system")
    if not system.can_assemble:
        raise MissingCapability("smallest-eigenvalue search needs explicit assembly")
    cands = candidate_points(rule, cap, seed)
    best, best_est, total, stagnated, skipped = None, np.inf, 0, 0, 0
    for point in cands:
        rng = np.random.default_rng(seed)
        try:
            est, it, ok = _inverse_iteration(system, point, iters, tol, rng)
        except (np.linalg.LinAlgError, RuntimeError):
            skipped += 1
            continue
        total += it
        stagnated += not ok
        if est < best_est:
            best, best_est = point, est
    if best is None:
        raise SingularPreconditioner("no candidate point gave a factorizable matrix")
    if skipped:
        warnings.warn(f"skipped {skipped} candidates whose matrix failed to factorize")
    return PointSelectionReport(np.array(best), float(best_est), len(cands), total, stagnated, skipped)


# ---------------------------------------------------------------------------


def build_preconditioner(spec, system, rule=None):
    """Resolve ``spec`` to a :class:`BlockPreconditioner` (``None`` for ``kind='none'``).

    The setup time in seconds is stored on the result as ``setup_seconds``.
    """
    if spec.kind == "none":
        return None
    t0 = time.perf_counter()
    d = system.dim_parameters
    report = None
    if spec.kind == "diagonal":
        point = np.zeros(d) if spec.point is None else np.asarray(spec.point, dtype=float)
        pre = BlockPreconditioner(system.diagonal(point), label=spec.label)
        pre.point = point
        pre.setup_seconds = time.perf_counter() - t0
        return pre
    if not system.can_assemble:
        raise MissingCapability(f"preconditioner {spec.kind} needs explicit assembly of A(s)")
    if spec.kind == "midpoint":
        point = np.zeros(d)
    elif spec.kind == "fixed_point":
        if spec.point is None:
            raise ValueError("fixed_point preconditioner needs a point")
        point = np.asarray(spec.point, dtype=float)
    elif spec.kind == "random":
        point = np.random.default_rng(spec.seed).uniform(-1.0, 1.0, size=d)
    elif spec.kind in ("largest_eig", "smallest_eig"):
        if rule is None:
            raise ValueError(f"{spec.kind} needs the quadrature rule for its candidate set")
        finder = find_largest_eig_point if spec.kind == "largest_eig" else find_smallest_eig_point
        report = finder(system, rule, seed=spec.seed)
        point = report.point
    else:  # mean
        point = None
    if point is None:
        mean_rule = tensor_rule([spec.order] * d)
        P = None
        for lam, nu in zip(mean_rule.points, mean_rule.weights):
            term = nu * system.assemble(lam)
            P = term if P is None else P + term
    else:
        P = system.assemble(point)
    pre = BlockPreconditioner(P, symmetric=system.symmetric, label=spec.label)
    pre.point = point
    pre.selection = report
    pre.setup_seconds = time.perf_counter() - t0
    logger.info("preconditioner %s ready in %.3fs", spec.label, pre.setup_seconds)
    return pre
