import os
import subprocess
import sys

import numpy as np
import pytest

from pmgalerkin import kernels
from pmgalerkin._accel import NUMBA_ENABLED


@pytest.mark.parametrize("m,J", [(1, 1), (2, 3), (7, 5), (16, 2)])
def test_numba_matches_numpy(m, J, rng):
    weights = rng.standard_normal((J, 5, m, m))
    w = rng.standard_normal((J, m * m))
    ref = kernels.stencil5_apply_batch_numpy(weights, w)
    got = kernels.stencil5_apply_batch_numba(weights, w)
    np.testing.assert_allclose(got, ref, rtol=1e-14, atol=1e-14)


def test_dense_oracle(rng):
    """Each stencil equals an explicit 5-point matrix."""
    m = 4
    weights = rng.standard_normal((1, 5, m, m))
    A = np.zeros((m * m, m * m))
    for i in range(m):
        for j in range(m):
            k = i * m + j
            A[k, k] = weights[0, kernels.CENTER, i, j]
            if i + 1 < m:
                A[k, k + m] = weights[0, kernels.EAST, i, j]
            if i > 0:
                A[k, k - m] = weights[0, kernels.WEST, i, j]
            if j + 1 < m:
                A[k, k + 1] = weights[0, kernels.NORTH, i, j]
            if j > 0:
                A[k, k - 1] = weights[0, kernels.SOUTH, i, j]
    v = rng.standard_normal(m * m)
    np.testing.assert_allclose(kernels.stencil5_apply_batch(weights, v[None])[0], A @ v, rtol=1e-13)


def test_out_argument(rng):
    weights = rng.standard_normal((2, 5, 3, 3))
    w = rng.standard_normal((2, 9))
    out = np.empty((2, 9))
    assert kernels.stencil5_apply_batch(weights, w, out=out) is out


def test_dispatch_follows_flag():
    expected = kernels.stencil5_apply_batch_numba if NUMBA_ENABLED else kernels.stencil5_apply_batch_numpy
    assert kernels.stencil5_apply_batch is expected


def test_env_flag_selects_numpy():
    code = (
        "from pmgalerkin import kernels, NUMBA_ENABLED;"
        "assert not NUMBA_ENABLED;"
        "assert kernels.stencil5_apply_batch is kernels.stencil5_apply_batch_numpy;"
        "from pmgalerkin import diffusion_system, total_degree_set, tensor_rule, build_basis_quad, GalerkinOperator;"
        "import numpy as np;"
        "op = GalerkinOperator(build_basis_quad(total_degree_set(2, 2), tensor_rule([3, 3])), diffusion_system(5, d=2));"
        "print(repr(float(op.matvec(np.arange(op.size, dtype=float)).sum())))"
    )
    env = dict(os.environ, PMGALERKIN_DISABLE_NUMBA="1")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    env.pop("PMGALERKIN_DISABLE_NUMBA")
    code_on = code.replace("assert not NUMBA_ENABLED;", "").replace(
        "assert kernels.stencil5_apply_batch is kernels.stencil5_apply_batch_numpy;", ""
    )
    on = subprocess.run([sys.executable, "-c", code_on], env=env, capture_output=True, text=True, check=True)
    assert float(res.stdout) == pytest.approx(float(on.stdout), rel=1e-13)
