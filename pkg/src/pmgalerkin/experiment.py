"""Orchestration behind the command line: build, solve, benchmark, verify."""
import logging
import os
import re
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import io
from .basis import anisotropic_tensor_set, eval_basis_matrix, tensor_rule, total_degree_set
from .errors import Breakdown, NonFiniteEncountered, PMGalerkinError, QuadratureTooCoarse
from .galerkin import (
    GalerkinOperator,
    assemble_dense_galerkin,
    assemble_rhs,
    build_basis_quad,
    eigenvalue_bounds,
)
from .krylov import SolverConfig, solve
from .preconditioners import PreconditionerSpec, build_preconditioner
from .problems import (
    advection_diffusion_system,
    affine_system,
    diffusion_system,
    identity_system,
    kl_decompose,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2
EXIT_NOT_CONVERGED = 3

VERIFY_CAP = 5000
VERIFY_NNZ_CAP = 2 * 10**7
VERIFY_TOL = 1e-10
VERIFY_SOLVE_RTOL = 1e-10


def build_system(problem):
    """Parameterized system described by a :class:`~pmgalerkin.config.ProblemConfig`."""
    if problem.kind == "identity":
        b_terms = None
        if problem.b_terms is not None:
            b_terms = list(np.reshape(problem.b_terms, (problem.d, problem.N)))
        b0 = None if problem.b0 is None else np.asarray(problem.b0)
        return identity_system(problem.N, problem.d, b0=b0, b_terms=b_terms, seed=problem.seed)
    if problem.kind == "affine":
        return affine_system(problem.N, problem.d, seed=problem.seed, spd=problem.spd)
    if problem.kind == "diffusion":
        return diffusion_system(problem.m, d=problem.d, scale=problem.scale)
    return advection_diffusion_system(problem.m, d=problem.d, upwind=problem.upwind)


def build_index_set(cfg):
    if cfg.basis.kind == "tensor":
        return anisotropic_tensor_set(cfg.basis.orders)
    return total_degree_set(cfg.d, cfg.basis.n)


def build_operator(cfg, system=None, threads=1):
    system = build_system(cfg.problem) if system is None else system
    index_set = build_index_set(cfg)
    rule = tensor_rule(cfg.quadrature_orders)
    return GalerkinOperator(build_basis_quad(index_set, rule), system, threads=threads)


def _grid_shape(cfg):
    return (cfg.problem.m, cfg.problem.m) if cfg.problem.is_grid else None


def _slug(label):
    return re.sub(r"[^a-z0-9]+", "-", label.lower()).strip("-")


@dataclass
class RunRecord:
    label: str
    solution: object
    setup_seconds: float
    partial: bool = False
    error: str = ""


def _solve_one(op, rhs, spec, solver_cfg):
    """Build the preconditioner and solve; failures become a partial record."""
    pre = build_preconditioner(spec, op.system, rule=op.basisquad.rule)
    setup = getattr(pre, "setup_seconds", 0.0)
    try:
        sol = solve(op, rhs, solver_cfg, precond=pre)
    except (Breakdown, NonFiniteEncountered) as exc:
        sol = exc.solution
        if sol is not None:
            sol.precond = spec.label
            sol.solve_seconds = 0.0
        return RunRecord(spec.label, sol, setup, partial=True, error=f"{type(exc).__name__}: {exc}")
    return RunRecord(spec.label, sol, setup, partial=not sol.converged)


def _write_run(cfg, outdir, record, suffix=""):
    sol = record.solution
    if sol is None:
        return
    arts = cfg.artifacts
    if "coefficients" in arts:
        io.write_solution(os.path.join(outdir, f"coefficients{suffix}.txt"), sol, partial=record.partial)
    if "moments" in arts:
        mean, var = sol.moments()
        io.write_moments(
            os.path.join(outdir, f"mean{suffix}.csv"),
            os.path.join(outdir, f"variance{suffix}.csv"),
            mean,
            var,
            grid_shape=_grid_shape(cfg),
        )
    if "history" in arts:
        io.write_history(os.path.join(outdir, f"history{suffix}.csv"), sol.residual_history)


def _solver_config(cfg, symmetric):
    method = cfg.method
    if not symmetric and method in ("cg", "minres"):
        logger.warning("system is nonsymmetric; using bicgstab instead of %s", method)
        method = "bicgstab"
    return SolverConfig(method=method, rtol=cfg.rtol, maxiter=cfg.maxiter)


def run_solve(cfg, threads=1, out=print):
    """Single solve with the configured preconditioner; returns an exit status."""
    outdir = io.ensure_dir(cfg.output_dir)
    op = build_operator(cfg, threads=threads)
    rhs = assemble_rhs(op)
    spec = PreconditionerSpec(cfg.precond_kind, cfg.precond_order, cfg.precond_seed, cfg.precond_point)
    record = _solve_one(op, rhs, spec, _solver_config(cfg, op.system.symmetric))
    _write_run(cfg, outdir, record)
    sol = record.solution
    if "summary" in cfg.artifacts and sol is not None:
        io.write_summary(os.path.join(outdir, "summary.csv"), [io.summary_row(sol, record.setup_seconds)])
    if sol is not None:
        out(
            f"{sol.method} precond={record.label} iterations={sol.iterations} "
            f"relres={sol.relative_residual:.3e} converged={str(sol.converged).lower()}"
        )
    if record.partial:
        out(f"solver did not converge ({record.error or 'iteration limit'}); artifacts marked partial")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def benchmark_specs(cfg, symmetric):
    """Preconditioner specs for a benchmark run, in table order."""
    specs = []
    for kind in cfg.benchmark_kinds:
        if kind in ("largest_eig", "smallest_eig") and not symmetric:
            logger.info("skipping %s for a nonsymmetric system", kind)
            continue
        if kind == "mean":
            specs += [PreconditionerSpec("mean", order=o) for o in cfg.mean_orders]
        elif kind == "random":
            specs += [PreconditionerSpec("random", seed=cfg.precond_seed + i) for i in range(cfg.random_runs)]
        elif kind == "fixed_point":
            if cfg.precond_point is not None:
                specs.append(PreconditionerSpec("fixed_point", point=cfg.precond_point))
        else:
            specs.append(PreconditionerSpec(kind, order=cfg.precond_order, seed=cfg.precond_seed))
    return specs


@dataclass
class BenchmarkResult:
    records: list = field(default_factory=list)
    table: list = field(default_factory=list)
    max_disagreement: float = 0.0


def run_benchmark(cfg, threads=1, out=print):
    """Solve once per preconditioner kind and tabulate.

    Returns:
        ``(exit_status, BenchmarkResult)``.
    """
    outdir = io.ensure_dir(cfg.output_dir)
    op = build_operator(cfg, threads=threads)
    rhs = assemble_rhs(op)
    solver_cfg = _solver_config(cfg, op.system.symmetric)
    result = BenchmarkResult()
    summary = []
    for spec in benchmark_specs(cfg, op.system.symmetric):
        try:
            record = _solve_one(op, rhs, spec, solver_cfg)
        except PMGalerkinError as exc:
            out(f"{spec.label}: skipped ({type(exc).__name__}: {exc})")
            continue
        result.records.append(record)
        _write_run(cfg, outdir, record, suffix="_" + _slug(spec.label))
        sol = record.solution
        if sol is None:
            continue
        result.table.append(
            io.benchmark_row(spec.label, record.setup_seconds, sol.iterations, sol.solve_seconds)
        )
        summary.append(io.summary_row(sol, record.setup_seconds))
    io.write_benchmark_table(os.path.join(outdir, "benchmark.csv"), result.table)
    if "summary" in cfg.artifacts:
        io.write_summary(os.path.join(outdir, "summary.csv"), summary)
    out(io.format_table(result.table))

    done = [r.solution.vector for r in result.records if r.solution is not None and not r.partial]
    for i in range(len(done)):
        for j in range(i + 1, len(done)):
            scale = max(np.linalg.norm(done[i]), np.linalg.norm(done[j]), 1e-300)
            result.max_disagreement = max(result.max_disagreement, np.linalg.norm(done[i] - done[j]) / scale)
    out(f"max pairwise relative difference between converged solutions: {result.max_disagreement:.3e}")
    if any(r.partial for r in result.records):
        out("some runs did not converge; their artifacts are marked partial")
        return EXIT_NOT_CONVERGED, result
    return EXIT_OK, result


# ---------------------------------------------------------------------------
# verify


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    value: float = float("nan")


def _shrink(cfg):
    """Return a config small enough for dense assembly and a note on what changed."""
    n_terms = len(build_index_set(cfg))
    n_points = int(np.prod(cfg.quadrature_orders))
    max_state = max(1, min(VERIFY_CAP // n_terms, VERIFY_NNZ_CAP // (n_terms * n_points)))
    p = cfg.problem
    if p.is_grid:
        m = p.m
        while m > 2 and m * m > max_state:
            m -= 1
        if m != p.m:
            return replace(cfg, problem=replace(p, m=m)), f"grid shrunk from m={p.m} to m={m}"
    elif p.N > max_state:
        N = max_state
        b0 = None if p.b0 is None else p.b0[:N]
        bt = None
        if p.b_terms is not None:
            bt = tuple(np.reshape(p.b_terms, (p.d, p.N))[:, :N].ravel())
        return replace(cfg, problem=replace(p, N=N, b0=b0, b_terms=bt)), f"state shrunk from N={p.N} to N={N}"
    return cfg, ""


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def verify(cfg, threads=1):
    """Run the dense oracle checks on a (possibly shrunken) instance.

    Returns:
        ``(checks, note)``: a list of :class:`CheckResult` and a description of
        any shrinking applied.
    """
    cfg, note = _shrink(cfg)
    checks = []
    index_set = build_index_set(cfg)
    rule = tensor_rule(cfg.quadrature_orders)
    Q = eval_basis_matrix(index_set, rule.points) * np.sqrt(rule.weights)[None, :]
    orth = float(np.max(np.abs(Q @ Q.T - np.eye(len(index_set)))))
    try:
        bq = build_basis_quad(index_set, rule)
    except QuadratureTooCoarse as exc:
        kind = type(exc).__name__
        label = "QuadratureTooCoarse" if kind == "QuadratureTooCoarse" else f"QuadratureTooCoarse ({kind})"
        checks.append(
            CheckResult("orthonormality", False, f"{label}: {exc}; max|QQ^T - I| = {orth:.3e}", orth)
        )
        for name in ("factorization", "matvec", "eigenvalue_bounds", "solver_vs_direct"):
            checks.append(CheckResult(name, False, "not run: quadrature too coarse"))
        return checks, note
    checks.append(CheckResult("orthonormality", orth <= VERIFY_TOL, f"max|QQ^T - I| = {orth:.3e}", orth))

    system = build_system(cfg.problem)
    op = GalerkinOperator(bq, system, threads=threads)
    N = op.N
    G = assemble_dense_galerkin(op)

    QI = sp.kron(sp.csr_matrix(op.Q), sp.identity(N, format="csr"), format="csr")
    B = sp.block_diag([sp.csr_matrix(_dense(system.assemble(p))) for p in op.points], format="csr")
    T = (QI @ B @ QI.T).toarray()
    fac = float(np.linalg.norm(G - T) / max(np.linalg.norm(G), 1e-300))
    checks.append(CheckResult("factorization", fac <= VERIFY_TOL, f"relative Frobenius gap = {fac:.3e}", fac))

    rng = np.random.default_rng(cfg.problem.seed)
    worst = 0.0
    for _ in range(3):
        u = rng.standard_normal(op.size)
        ref = G @ u
        worst = max(worst, float(np.linalg.norm(op.matvec(u) - ref) / max(np.linalg.norm(ref), 1e-300)))
    checks.append(CheckResult("matvec", worst <= VERIFY_TOL, f"max relative gap vs dense = {worst:.3e}", worst))

    if system.symmetric:
        lo, hi = eigenvalue_bounds(op)
        ev = np.linalg.eigvalsh(0.5 * (G + G.T))
        slack = VERIFY_TOL * (1 + abs(hi))
        excess = float(max(lo - ev.min(), ev.max() - hi, 0.0))
        checks.append(
            CheckResult(
                "eigenvalue_bounds",
                excess <= slack,
                f"bounds ({lo:.6g}, {hi:.6g}), spectrum ({ev.min():.6g}, {ev.max():.6g})",
                excess,
            )
        )
    else:
        checks.append(CheckResult("eigenvalue_bounds", True, "skipped: system is nonsymmetric"))

    rhs = assemble_rhs(op)
    direct = np.linalg.solve(G, rhs)
    method = cfg.method if system.symmetric else "bicgstab"
    sol = solve(op, rhs, SolverConfig(method=method, rtol=VERIFY_SOLVE_RTOL))
    gap = float(np.linalg.norm(sol.vector - direct) / max(np.linalg.norm(direct), 1e-300))
    tol = 1e-7 if system.symmetric else 1e-6
    checks.append(
        CheckResult(
            "solver_vs_direct",
            bool(sol.converged) and gap <= tol,
            f"{method} {sol.iterations} iterations, relative gap vs dense solve = {gap:.3e}",
            gap,
        )
    )
    return checks, note


def format_checks(checks):
    return "\n".join(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in checks)


def run_verify(cfg, threads=1, out=print):
    checks, note = verify(cfg, threads=threads)
    if note:
        out(f"note: {note}")
    text = format_checks(checks)
    out(text)
    outdir = io.ensure_dir(cfg.output_dir)
    with open(os.path.join(outdir, "verify.txt"), "w") as fh:
        fh.write((f"note: {note}\n" if note else "") + text + "\n")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK_FAILED


def run_kl_spectrum(cfg, out=print):
    """KL spectrum CSV for the field of the configured grid."""
    outdir = io.ensure_dir(cfg.output_dir)
    field_ = kl_decompose(cfg.problem.m + 2, cfg.d, scale=cfg.problem.scale)
    path = os.path.join(outdir, "kl_spectrum.csv")
    io.write_kl_spectrum(path, field_, count=max(cfg.kl_modes, cfg.d))
    out(
        f"{cfg.d}-mode cumulative energy {field_.energy_fractions[-1]:.4f} "
        f"(sigma fraction {field_.sigma_fractions(cfg.d)[-1]:.4f}); wrote {path}"
    )
    return EXIT_OK


def run_experiment(cfg, threads=1, out=print):
    """Benchmark when the config's benchmark flag is set, single solve otherwise."""
    if cfg.benchmark:
        return run_benchmark(cfg, threads=threads, out=out)[0]
    return run_solve(cfg, threads=threads, out=out)
