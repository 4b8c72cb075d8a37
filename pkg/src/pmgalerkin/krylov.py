"""Matrix-free Krylov solvers: CG, MINRES and BiCGStab.

All three stop on the unpreconditioned relative residual
``||b - A x||_2 <= rtol ||b||_2``. The residual is carried by recurrence and
replaced by the true residual every ``TRUE_RESIDUAL_EVERY`` iterations and
before convergence is declared.

``history`` records the residual norm each method naturally monitors: for
CG and MINRES the preconditioned norm ``sqrt(r^T M^{-1} r)`` (the plain
2-norm without preconditioner), for BiCGStab ``||r||_2``.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import Breakdown, MaxIterExceeded, NonFiniteEncountered, NotSymmetric

TRUE_RESIDUAL_EVERY = 25
BREAKDOWN_TOL = 1e-30
METHODS = ("cg", "minres", "bicgstab")


@dataclass
class SolverConfig:
    method: str = "minres"
    rtol: float = 1e-8
    maxiter: int = None
    record_history: bool = True
    raise_on_maxiter: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")
        if self.maxiter is not None and self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    converged: bool
    relative_residual: float
    history: list = field(default_factory=list)


def _identity(v):
    return v


class _Monitor:
    """Tracks the recurrence residual and confirms convergence with the true one."""

    def __init__(self, matvec, b, rtol):
        self.matvec = matvec
        self.b = b
        self.bnorm = np.linalg.norm(b)
        self.target = rtol * self.bnorm

    def true_residual(self, x):
        return self.b - self.matvec(x)

    def relres(self, r):
        return np.linalg.norm(r) / self.bnorm if self.bnorm else 0.0


def _finite(name, *vals):
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise NonFiniteEncountered(f"{name}: non-finite value encountered")


def cg(matvec, b, precond=None, rtol=1e-8, maxiter=None, record_history=True):
    """Preconditioned conjugate gradients for SPD systems."""
    M = precond or _identity
    n = b.shape[0]
    maxiter = maxiter or 10 * n
    mon = _Monitor(matvec, b, rtol)
    x = np.zeros(n)
    r = b.copy()
    history = []
    if mon.bnorm == 0:
        return KrylovResult(x, 0, True, 0.0, [0.0])
    z = M(r)
    rz = float(r @ z)
    p = z.copy()
    if record_history:
        history.append(np.sqrt(abs(rz)))
    for it in range(1, maxiter + 1):
        q = matvec(p)
        pq = float(p @ q)
        _finite("cg", pq)
        if pq == 0:
            raise Breakdown("cg: p^T A p = 0", x)
        alpha = rz / pq
        x += alpha * p
        if it % TRUE_RESIDUAL_EVERY == 0:
            r = mon.true_residual(x)
        else:
            r -= alpha * q
        rnorm = np.linalg.norm(r)
        _finite("cg", rnorm)
        z = M(r)
        rz_new = float(r @ z)
        if record_history:
            history.append(np.sqrt(abs(rz_new)))
        if rnorm <= mon.target:
            r = mon.true_residual(x)
            if np.linalg.norm(r) <= mon.target:
                return KrylovResult(x, it, True, mon.relres(r), history)
            z = M(r)
            rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    return KrylovResult(x, maxiter, False, mon.relres(mon.true_residual(x)), history)


def minres(matvec, b, precond=None, rtol=1e-8, maxiter=None, record_history=True):
    """Preconditioned MINRES (Paige-Saunders) for symmetric systems.

    ``precond`` must be symmetric positive definite. Besides the Lanczos
    recurrences, the product ``A w`` of each search direction is updated by
    the same recurrence so the unpreconditioned residual is available
    without extra matrix products.
    """
    M = precond or _identity
    n = b.shape[0]
    maxiter = maxiter or 10 * n
    mon = _Monitor(matvec, b, rtol)
    x = np.zeros(n)
    res = b.copy()
    if mon.bnorm == 0:
        return KrylovResult(x, 0, True, 0.0, [0.0])

    r1 = b.copy()
    y = M(r1)
    beta1 = float(r1 @ y)
    if beta1 < 0:
        raise NotSymmetric("minres: preconditioner is not positive definite")
    beta1 = np.sqrt(beta1)
    oldb, beta, dbar, epsln, phibar = 0.0, beta1, 0.0, 0.0, beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    aw = np.zeros(n)
    aw2 = np.zeros(n)
    r2 = r1
    history = [phibar] if record_history else []

    for it in range(1, maxiter + 1):
        v = y / beta
        av = matvec(v)
        y = av.copy()
        if it >= 2:
            y -= (beta / oldb) * r1
        alfa = float(v @ y)
        y -= (alfa / beta) * r2
        r1, r2 = r2, y
        y = M(r2)
        oldb = beta
        beta = float(r2 @ y)
        if beta < 0:
            raise NotSymmetric("minres: preconditioner is not positive definite")
        beta = np.sqrt(beta)
        _finite("minres", alfa, beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = np.hypot(gbar, beta)
        if gamma == 0:
            raise Breakdown("minres: singular tridiagonal factor", x)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        aw1, aw2 = aw2, aw
        aw = (av - oldeps * aw1 - delta * aw2) / gamma
        x += phi * w

        if it % TRUE_RESIDUAL_EVERY == 0:
            res = mon.true_residual(x)
        else:
            res -= phi * aw
        if record_history:
            history.append(phibar)
        rnorm = np.linalg.norm(res)
        _finite("minres", rnorm)
        if rnorm <= mon.target:
            res = mon.true_residual(x)
            if np.linalg.norm(res) <= mon.target:
                return KrylovResult(x, it, True, mon.relres(res), history)
        if beta == 0:
            # invariant subspace found; x is the exact minimizer
            res = mon.true_residual(x)
            return KrylovResult(x, it, np.linalg.norm(res) <= mon.target, mon.relres(res), history)
    return KrylovResult(x, maxiter, False, mon.relres(mon.true_residual(x)), history)


def bicgstab(matvec, b, precond=None, rtol=1e-8, maxiter=None, record_history=True):
    """Preconditioned BiCGStab for general nonsymmetric systems.

    Raises:
        Breakdown: ``|rho| < 1e-30`` or ``omega == 0``.
    """
    M = precond or _identity
    n = b.shape[0]
    maxiter = maxiter or 10 * n
    mon = _Monitor(matvec, b, rtol)
    x = np.zeros(n)
    if mon.bnorm == 0:
        return KrylovResult(x, 0, True, 0.0, [0.0])
    r = b.copy()
    rhat = r.copy()
    rho_old = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    history = [np.linalg.norm(r)] if record_history else []
    for it in range(1, maxiter + 1):
        rho = float(rhat @ r)
        _finite("bicgstab", rho)
        if abs(rho) < BREAKDOWN_TOL:
            raise Breakdown(f"bicgstab: rho = {rho:.3e}", x)
        if it == 1:
            p = r.copy()
        else:
            beta = (rho / rho_old) * (alpha / omega)
            p = r + beta * (p - omega * v)
        phat = M(p)
        v = matvec(phat)
        rv = float(rhat @ v)
        if abs(rv) < BREAKDOWN_TOL:
            raise Breakdown(f"bicgstab: rhat^T v = {rv:.3e}", x)
        alpha = rho / rv
        s = r - alpha * v
        if np.linalg.norm(s) <= mon.target:
            x += alpha * phat
            res = mon.true_residual(x)
            if record_history:
                history.append(np.linalg.norm(res))
            if np.linalg.norm(res) <= mon.target:
                return KrylovResult(x, it, True, mon.relres(res), history)
            r = res
            rho_old = rho
            continue
        shat = M(s)
        t = matvec(shat)
        tt = float(t @ t)
        if tt == 0:
            raise Breakdown("bicgstab: t = 0", x)
        omega = float(t @ s) / tt
        if omega == 0:
            raise Breakdown("bicgstab: omega = 0", x)
        x += alpha * phat + omega * shat
        if it % TRUE_RESIDUAL_EVERY == 0:
            r = mon.true_residual(x)
        else:
            r = s - omega * t
        rnorm = np.linalg.norm(r)
        _finite("bicgstab", rnorm)
        if record_history:
            history.append(rnorm)
        if rnorm <= mon.target:
            r = mon.true_residual(x)
            if np.linalg.norm(r) <= mon.target:
                return KrylovResult(x, it, True, mon.relres(r), history)
        rho_old = rho
    return KrylovResult(x, maxiter, False, mon.relres(mon.true_residual(x)), history)


_SOLVERS = {"cg": cg, "minres": minres, "bicgstab": bicgstab}


def solve(op, rhs, config=None, precond=None):
    """Solve the Galerkin system ``op x = rhs``.

    Args:
        op: a :class:`~pmgalerkin.galerkin.GalerkinOperator`.
        rhs: stacked right-hand side from :func:`~pmgalerkin.galerkin.assemble_rhs`.
        config: :class:`SolverConfig`; defaults to MINRES with ``rtol=1e-8``.
        precond: a :class:`~pmgalerkin.preconditioners.BlockPreconditioner` or ``None``.

    Returns:
        :class:`~pmgalerkin.galerkin.GalerkinSolution`. On non-convergence the
        partial solution is returned with ``converged=False`` unless
        ``config.raise_on_maxiter`` is set.
    """
    from .galerkin import GalerkinSolution

    config = config or SolverConfig()
    if config.method in ("cg", "minres") and not op.system.symmetric:
        raise NotSymmetric(f"{config.method} needs a system declared symmetric; use bicgstab")
    if precond is not None and config.method in ("cg", "minres") and not precond.symmetric:
        raise NotSymmetric(f"{config.method} needs a symmetric positive definite preconditioner")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.size,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({op.size},)")
    maxiter = config.maxiter or 10 * op.size
    t0 = time.perf_counter()
    try:
        result = _SOLVERS[config.method](
            op.matvec, rhs, precond, config.rtol, maxiter, config.record_history
        )
    except (Breakdown, NonFiniteEncountered) as exc:
        if exc.solution is not None:
            exc.solution = GalerkinSolution.from_vector(
                exc.solution, op.basisquad.index_set, method=config.method, converged=False
            )
        raise
    elapsed = time.perf_counter() - t0
    sol = GalerkinSolution.from_vector(
        result.x,
        op.basisquad.index_set,
        residual_history=[float(h) for h in result.history],
        iterations=result.iterations,
        converged=result.converged,
        method=config.method,
        precond=getattr(precond, "label", "none"),
        relative_residual=result.relative_residual,
    )
    sol.solve_seconds = elapsed
    if not result.converged and config.raise_on_maxiter:
        raise MaxIterExceeded(
            f"{config.method} did not reach rtol={config.rtol:g} in {maxiter} iterations", sol
        )
    return sol
