import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from pmgalerkin import (
    GalerkinOperator,
    build_basis_quad,
    tensor_rule,
    total_degree_set,
)


def dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def triple_product(op):
    """``(Q kron I) blkdiag(A(l_b)) (Q kron I)^T`` built explicitly."""
    N = op.N
    QI = np.kron(op.Q, np.eye(N))
    blocks = sla.block_diag(*(dense(op.system.assemble(p)) for p in op.points))
    return QI @ blocks @ QI.T


def make_operator(system, n, order=None):
    d = system.dim_parameters
    basis = total_degree_set(d, n)
    rule = tensor_rule([order or n + 1] * d)
    return GalerkinOperator(build_basis_quad(basis, rule), system)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
