"""Time the five-point stencil sweep and a full Galerkin matvec, numba vs numpy.

Usage::

    python benchmarks/bench_stencil.py [--m 31] [--d 4] [--n 3] [--order 5] [--repeat 20]

The matvec comparison runs each backend in a fresh interpreter because the
backend is chosen at import time from ``PMGALERKIN_DISABLE_NUMBA``.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from pmgalerkin import kernels


def best_of(func, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        func()
        times.append(time.perf_counter() - t0)
    return min(times)


MATVEC_SCRIPT = """
import json, sys, time
import numpy as np
from pmgalerkin import (GalerkinOperator, build_basis_quad, diffusion_system,
                        tensor_rule, total_degree_set, NUMBA_ENABLED)
m, d, n, order, repeat = map(int, sys.argv[1:])
op = GalerkinOperator(build_basis_quad(total_degree_set(d, n), tensor_rule([order] * d)),
                      diffusion_system(m, d=d))
u = np.random.default_rng(0).standard_normal(op.size)
op.matvec(u)  # compile and fill the weight cache
best = min(
    (lambda t0: (op.matvec(u), time.perf_counter() - t0)[1])(time.perf_counter())
    for _ in range(repeat)
)
print(json.dumps({"numba": NUMBA_ENABLED, "seconds": best}))
"""


def matvec_time(m, d, n, order, repeat, disable):
    env = dict(os.environ)
    if disable:
        env["PMGALERKIN_DISABLE_NUMBA"] = "1"
    else:
        env.pop("PMGALERKIN_DISABLE_NUMBA", None)
    args = [sys.executable, "-c", MATVEC_SCRIPT, str(m), str(d), str(n), str(order), str(repeat)]
    res = subprocess.run(args, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--m", type=int, default=31)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)

    J = args.order**args.d
    rng = np.random.default_rng(0)
    weights = rng.standard_normal((J, 5, args.m, args.m))
    w = rng.standard_normal((J, args.m * args.m))
    out = np.empty_like(w)
    kernels.stencil5_apply_batch_numba(weights, w, out)  # compile
    t_np = best_of(lambda: kernels.stencil5_apply_batch_numpy(weights, w, out), args.repeat)
    t_nb = best_of(lambda: kernels.stencil5_apply_batch_numba(weights, w, out), args.repeat)
    print(f"stencil sweep  J={J} m={args.m}: numpy {t_np * 1e3:8.2f} ms  numba {t_nb * 1e3:8.2f} ms  "
          f"speedup {t_np / t_nb:5.2f}x")

    a = matvec_time(args.m, args.d, args.n, args.order, args.repeat, disable=True)
    b = matvec_time(args.m, args.d, args.n, args.order, args.repeat, disable=False)
    print(f"galerkin matvec: numpy {a['seconds'] * 1e3:8.2f} ms  numba {b['seconds'] * 1e3:8.2f} ms  "
          f"speedup {a['seconds'] / b['seconds']:5.2f}x")


if __name__ == "__main__":
    main()
