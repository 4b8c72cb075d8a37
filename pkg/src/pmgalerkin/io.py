"""Plain-text and CSV artifacts: solutions, residual histories, moments, tables.

Floats are written with ``%.17e`` so files round-trip exactly and reruns with
the same inputs are byte-identical.
"""
import csv
import os

import numpy as np

from .basis import explicit_set

FLOAT_FMT = "%.17e"
SUMMARY_FIELDS = ("method", "precond", "iterations", "setup_seconds", "solve_seconds", "converged")
BENCHMARK_FIELDS = ("Method", "Setup(s)", "Iterations", "Avg-Iter(s)", "Total(s)")


def _fmt(x):
    return FLOAT_FMT % x


def write_solution(path, sol, partial=False):
    """Write the coefficient matrix with a self-describing header.

    The header lists ``N``, ``d``, the number of terms, the basis description,
    the ordering and every multi-index. Then comes one line per multi-index
    holding the ``N`` coefficients of that column (column-major order).

    Args:
        path: destination file.
        sol: a :class:`~pmgalerkin.galerkin.GalerkinSolution`.
        partial: mark the file as holding an unconverged iterate.
    """
    X = sol.coefficients
    index_set = sol.index_set
    N, n = X.shape
    lines = [
        "# pmgalerkin solution",
        f"status {'partial' if partial else 'converged'}",
        f"N {N}",
        f"d {index_set.dim}",
        f"terms {n}",
        f"basis {index_set.describe()}",
        "ordering graded_lex",
    ]
    lines += ["index " + " ".join(str(int(k)) for k in alpha) for alpha in index_set.indices]
    lines.append("coefficients")
    lines += [" ".join(_fmt(v) for v in X[:, a]) for a in range(n)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_solution(path):
    """Inverse of :func:`write_solution`.

    Returns:
        ``(solution, header)``: a :class:`~pmgalerkin.galerkin.GalerkinSolution`
        over an explicit index set, and a dict of the scalar header fields.
    """
    from .galerkin import GalerkinSolution

    header, indices, rows = {}, [], []
    in_coeffs = False
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if in_coeffs:
                rows.append([float(t) for t in line.split()])
            elif line == "coefficients":
                in_coeffs = True
            elif line.startswith("index "):
                indices.append([int(t) for t in line.split()[1:]])
            else:
                key, _, value = line.partition(" ")
                header[key] = value
    N, n = int(header["N"]), int(header["terms"])
    X = np.array(rows, dtype=float).T.reshape(N, n)
    index_set = explicit_set(indices)
    sol = GalerkinSolution(X, index_set, converged=header.get("status") != "partial")
    return sol, header


def write_history(path, history):
    """``iteration,residual_2norm`` rows; iteration 0 is the initial residual."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "residual_2norm"])
        for k, r in enumerate(history):
            w.writerow([k, _fmt(r)])


def read_history(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [float(r["residual_2norm"]) for r in rows]


def summary_row(sol, setup_seconds=0.0):
    return {
        "method": sol.method,
        "precond": sol.precond,
        "iterations": sol.iterations,
        "setup_seconds": f"{setup_seconds:.6f}",
        "solve_seconds": f"{getattr(sol, 'solve_seconds', 0.0):.6f}",
        "converged": str(bool(sol.converged)).lower(),
    }


def write_summary(path, rows):
    """One ``method,precond,iterations,setup_seconds,solve_seconds,converged`` line per run."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_moments(path_mean, path_var, mean, var, grid_shape=None):
    """Mean and variance as CSV.

    With ``grid_shape`` each file holds the field as a grid (one CSV row per
    grid row); otherwise a single column indexed by state component.
    """
    for path, values in ((path_mean, mean), (path_var, var)):
        values = np.asarray(values, dtype=float)
        if grid_shape is not None:
            np.savetxt(path, values.reshape(grid_shape), fmt=FLOAT_FMT, delimiter=",")
        else:
            np.savetxt(path, values[:, None], fmt=FLOAT_FMT, delimiter=",")


def read_grid_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_kl_spectrum(path, field, count=None):
    """``mode,sigma,cumulative_energy,cumulative_sigma`` rows for the leading modes.

    ``cumulative_energy`` is the eigenvalue (variance) fraction and
    ``cumulative_sigma`` the fraction of the summed square roots.
    """
    evals = field.eigenvalues
    count = len(evals) if count is None else min(count, len(evals))
    energy = field.spectrum_fractions(count)
    sig = field.sigma_fractions(count)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "sigma", "cumulative_energy", "cumulative_sigma"])
        for k in range(count):
            w.writerow([k + 1, _fmt(np.sqrt(evals[k])), _fmt(energy[k]), _fmt(sig[k])])


def benchmark_row(label, setup, iterations, solve_seconds):
    avg = solve_seconds / iterations if iterations else 0.0
    return {
        "Method": label,
        "Setup(s)": f"{setup:.4f}",
        "Iterations": str(iterations),
        "Avg-Iter(s)": f"{avg:.6f}",
        "Total(s)": f"{setup + solve_seconds:.4f}",
    }


def write_benchmark_table(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCHMARK_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def format_table(rows, fields=BENCHMARK_FIELDS):
    """Fixed-width text rendering of ``rows`` (list of dicts)."""
    widths = [max(len(f), *(len(str(r[f])) for r in rows)) if rows else len(f) for f in fields]
    out = ["  ".join(f.ljust(wd) for f, wd in zip(fields, widths))]
    out.append("  ".join("-" * wd for wd in widths))
    for r in rows:
        out.append("  ".join(str(r[f]).ljust(wd) for f, wd in zip(fields, widths)))
    return "\n".join(out)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path!r} is not writable")
    return path
