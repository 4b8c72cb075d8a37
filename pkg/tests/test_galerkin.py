from math import sqrt

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import dense, make_operator, triple_product
from pmgalerkin import (
    AffineSystem,
    CapExceeded,
    GalerkinOperator,
    GalerkinSolution,
    MissingCapability,
    NotSymmetric,
    ParameterizedSystem,
    QuadratureTooCoarse,
    RankDeficient,
    SystemEvaluationError,
    affine_system,
    anisotropic_tensor_set,
    assemble_dense_galerkin,
    assemble_rhs,
    build_basis_quad,
    diffusion_system,
    eigenvalue_bounds,
    eval_basis_matrix,
    evaluate_surrogate,
    galerkin_matvec,
    identity_system,
    kl_decompose,
    moments,
    tensor_rule,
    total_degree_set,
)


class TestBasisQuad:
    def test_hand_computed_1d(self):
        bq = build_basis_quad(total_degree_set(1, 1), tensor_rule([2]))
        r = 1 / sqrt(2)
        np.testing.assert_allclose(bq.Q, [[r, r], [-r, r]], atol=1e-15)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            build_basis_quad(total_degree_set(1, 2), tensor_rule([2]))
        # RankDeficient is reported as a too-coarse quadrature as well
        with pytest.raises(QuadratureTooCoarse):
            build_basis_quad(total_degree_set(1, 3), tensor_rule([1]))

    def test_aliasing_detected(self):
        # 6 terms, 6 points, but 2 points cannot integrate pi_2^2 in the first dimension
        with pytest.raises(QuadratureTooCoarse):
            build_basis_quad(anisotropic_tensor_set((2, 1)), tensor_rule([2, 3]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_basis_quad(total_degree_set(2, 1), tensor_rule([2]))

    def test_paper_shape(self):
        bq = build_basis_quad(total_degree_set(4, 5), tensor_rule([12] * 4))
        assert bq.shape == (126, 20736)
        assert bq.orth_error <= 1e-10


class TestMatvec:
    def test_identity_system(self, rng):
        op = make_operator(identity_system(3, 2), 3)
        u = rng.standard_normal(op.size)
        np.testing.assert_allclose(galerkin_matvec(op, u), u, atol=1e-13)

    def test_matches_dense_1d(self, rng):
        A0 = rng.standard_normal((2, 2)) + 3 * np.eye(2)
        A1 = rng.standard_normal((2, 2))
        system = AffineSystem(A0, [A1], np.ones(2), [np.zeros(2)])
        op = make_operator(system, 2, order=4)
        G = assemble_dense_galerkin(op)
        for _ in range(5):
            u = rng.standard_normal(op.size)
            ref = G @ u
            assert np.linalg.norm(op.matvec(u) - ref) <= 1e-12 * np.linalg.norm(ref)

    @pytest.mark.parametrize("seed", range(6))
    def test_factorization_identity(self, seed, rng):
        # polynomial degree p = 1, quadrature order n + 2 >= n + ceil(p/2) + 1
        N, d, n = 2 + seed, 1 + seed % 3, 1 + seed % 4
        system = affine_system(N, d, seed=seed, spd=seed % 2 == 0)
        op = make_operator(system, n, order=n + 2)
        G = assemble_dense_galerkin(op)
        T = triple_product(op)
        assert np.linalg.norm(G - T) <= 1e-12 * np.linalg.norm(G)
        for _ in range(20):
            u = rng.standard_normal(op.size)
            ref = G @ u
            assert np.linalg.norm(op.matvec(u) - ref) <= 1e-12 * np.linalg.norm(ref)

    def test_linearity(self, rng):
        op = make_operator(affine_system(5, 2, seed=3), 3)
        u, v = rng.standard_normal((2, op.size))
        a, b = 1.7, -0.3
        lhs = op.matvec(a * u + b * v)
        rhs = a * op.matvec(u) + b * op.matvec(v)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)

    def test_symmetry_inherited(self, rng):
        system = affine_system(6, 3, seed=8)
        for _ in range(5):
            lam = rng.uniform(-1, 1, 3)
            x, y = rng.standard_normal((2, 6))
            assert abs(y @ system.apply(lam, x) - x @ system.apply(lam, y)) <= 1e-12
        op = make_operator(system, 2)
        for _ in range(5):
            u, v = rng.standard_normal((2, op.size))
            gap = abs(u @ op.matvec(v) - v @ op.matvec(u))
            assert gap <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)

    def test_wrong_length(self):
        op = make_operator(identity_system(2, 1), 1)
        with pytest.raises(ValueError):
            op.matvec(np.zeros(3))

    def test_paper_scale_vector_length(self):
        class Shape(ParameterizedSystem):
            dim_parameters, dim_state, symmetric = 4, 1921, True

        op = GalerkinOperator(
            build_basis_quad(total_degree_set(4, 5), tensor_rule([6] * 4)), Shape()
        )
        assert op.size == 242046

    def test_failure_carries_point(self):
        class Bad(ParameterizedSystem):
            dim_parameters, dim_state = 1, 2

            def apply(self, point, v):
                if point[0] > 0.5:
                    raise FloatingPointError("boom")
                return v

        op = make_operator(Bad(), 1, order=3)
        with pytest.raises(SystemEvaluationError) as info:
            op.matvec(np.ones(op.size))
        assert info.value.point[0] > 0.5

    def test_threads_are_deterministic(self, rng):
        class Slow(ParameterizedSystem):
            dim_parameters, dim_state, symmetric = 2, 4, False

            def apply(self, point, v):
                return (1 + point[0]) * v + point[1] * np.roll(v, 1)

        u = rng.standard_normal(4 * 6)
        op1 = make_operator(Slow(), 2)
        op4 = make_operator(Slow(), 2)
        op4.threads = 4
        assert np.array_equal(op1.matvec(u), op4.matvec(u))


class TestRhs:
    def test_constant_rhs(self):
        b0 = np.array([1.0, -2.0, 0.5])
        op = make_operator(identity_system(3, 2, b0=b0, b_terms=[np.zeros(3)] * 2), 3)
        blocks = assemble_rhs(op).reshape(len(op.basisquad.index_set), 3)
        np.testing.assert_allclose(blocks[0], b0, atol=1e-13)
        assert np.max(np.abs(blocks[1:])) <= 1e-13

    def test_linear_rhs(self):
        c = 2.5
        op = make_operator(identity_system(1, 1, b0=[0.0], b_terms=[[c]]), 1, order=3)
        blocks = assemble_rhs(op)
        assert blocks[1] == pytest.approx(c / sqrt(3), rel=1e-14)

    def test_bilinear_rhs(self):
        class Product(ParameterizedSystem):
            dim_parameters, dim_state, symmetric = 2, 1, True

            def apply(self, point, v):
                return v

            def rhs(self, point):
                return np.array([point[0] * point[1]])

        op = make_operator(Product(), 2)
        blocks = assemble_rhs(op)
        s = op.basisquad.index_set
        k = s.position((1, 1))
        assert blocks[k] == pytest.approx(1 / 3, rel=1e-13)
        assert np.max(np.abs(np.delete(blocks, k))) <= 1e-14

    def test_matches_direct_summation(self):
        system = affine_system(4, 3, seed=2)
        op = make_operator(system, 2)
        rule = op.basisquad.rule
        P = eval_basis_matrix(op.basisquad.index_set, rule.points)
        ref = np.zeros((len(P), 4))
        for b, point in enumerate(rule.points):
            ref += np.outer(P[:, b], system.rhs(point)) * rule.weights[b]
        got = assemble_rhs(op).reshape(len(P), 4)
        np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-14)


class TestDenseAssembly:
    def test_identity(self):
        op = make_operator(identity_system(3, 2), 2)
        np.testing.assert_allclose(assemble_dense_galerkin(op), np.eye(op.size), atol=1e-13)

    def test_symmetric(self):
        op = make_operator(affine_system(4, 2, seed=5), 3)
        G = assemble_dense_galerkin(op)
        assert np.max(np.abs(G - G.T)) <= 1e-13

    def test_cap(self):
        op = make_operator(affine_system(50, 2, seed=5), 3)
        with pytest.raises(CapExceeded):
            assemble_dense_galerkin(op, cap=100)

    def test_needs_assembly(self):
        class MatrixFree(ParameterizedSystem):
            dim_parameters, dim_state = 1, 2

            def apply(self, point, v):
                return v

        with pytest.raises(MissingCapability):
            assemble_dense_galerkin(make_operator(MatrixFree(), 1))


class TestEigenvalueBounds:
    def test_identity(self):
        assert eigenvalue_bounds(make_operator(identity_system(3, 2), 2)) == pytest.approx((1, 1))

    def test_scalar(self):
        op = make_operator(affine_system(1, 1), 2, order=3)
        lo, hi = eigenvalue_bounds(op)
        assert lo == pytest.approx(2 - sqrt(3 / 5), rel=1e-13)
        assert hi == pytest.approx(2 + sqrt(3 / 5), rel=1e-13)

    @pytest.mark.parametrize("seed", range(4))
    def test_bounds_contain_spectrum(self, seed):
        op = make_operator(affine_system(5, 2, seed=seed), 3)
        lo, hi = eigenvalue_bounds(op)
        ev = np.linalg.eigvalsh(assemble_dense_galerkin(op))
        slack = 1e-10 * (1 + abs(hi))
        assert ev.min() >= lo - slack and ev.max() <= hi + slack

    def test_iterative_path_matches_dense(self):
        system = diffusion_system(21, kl_decompose(23, 2))
        op = make_operator(system, 1, order=2)
        lo, hi = eigenvalue_bounds(op)
        ref = [np.linalg.eigvalsh(dense(system.assemble(p))) for p in op.points]
        assert lo == pytest.approx(min(r[0] for r in ref), rel=1e-6)
        assert hi == pytest.approx(max(r[-1] for r in ref), rel=1e-6)

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetric):
            eigenvalue_bounds(make_operator(affine_system(4, 2, spd=False), 1))


class TestSolutionOps:
    def test_constant_surrogate(self):
        s = total_degree_set(2, 2)
        X = np.zeros((3, len(s)))
        X[:, 0] = [1.0, 2.0, 3.0]
        sol = GalerkinSolution(X, s)
        np.testing.assert_allclose(evaluate_surrogate(sol, [0.3, -0.9]), [1, 2, 3])

    def test_linear_surrogate(self):
        b0, b1 = np.array([1.0, -1.0]), np.array([0.5, 2.0])
        sol = GalerkinSolution(np.column_stack([b0, b1 / sqrt(3)]), total_degree_set(1, 1))
        np.testing.assert_allclose(sol.evaluate([0.5]), b0 + 0.5 * b1, rtol=1e-15)
        mean, var = moments(sol)
        np.testing.assert_allclose(mean, b0)
        np.testing.assert_allclose(var, b1**2 / 3, rtol=1e-15)

    def test_variance_sign_invariant(self, rng):
        s = total_degree_set(2, 2)
        X = rng.standard_normal((4, len(s)))
        flipped = X * np.r_[1.0, rng.choice([-1.0, 1.0], len(s) - 1)]
        assert np.array_equal(moments(GalerkinSolution(X, s))[1], moments(GalerkinSolution(flipped, s))[1])

    def test_zero_variance(self):
        sol = GalerkinSolution(np.column_stack([np.ones(3), np.zeros((3, 2))]), total_degree_set(2, 1))
        assert moments(sol)[1].tolist() == [0, 0, 0]

    def test_vector_roundtrip(self, rng):
        s = total_degree_set(2, 2)
        x = rng.standard_normal(5 * len(s))
        sol = GalerkinSolution.from_vector(x, s)
        assert sol.coefficients.shape == (5, len(s))
        assert np.array_equal(sol.vector, x)
        # column alpha is the alpha-th block of the stacked vector
        assert np.array_equal(sol.coefficients[:, 1], x[5:10])

    def test_projection_reproduces_polynomial(self):
        # A = I, b of degree <= n: surrogate equals b at every quadrature point
        b0, b1 = np.array([1.0, 2.0]), np.array([-0.5, 0.25])
        system = identity_system(2, 2, b0=b0, b_terms=[b1, 2 * b1])
        op = make_operator(system, 2)
        sol = GalerkinSolution.from_vector(assemble_rhs(op), op.basisquad.index_set)
        for p in op.points:
            np.testing.assert_allclose(sol.evaluate(p), system.rhs(p), atol=1e-13)
