import numpy as np
import pytest
import scipy.sparse as sp

from conftest import dense, make_operator
from pmgalerkin import (
    advection_diffusion_system,
    affine_system,
    assemble_dense_galerkin,
    diffusion_system,
    eigenvalue_bounds,
    identity_system,
    kl_decompose,
    zero_field,
)
from pmgalerkin.problems import DiffusionSystem, _stencil_to_csr


def all_systems():
    return [
        ("affine_spd", affine_system(7, 3, seed=1)),
        ("affine_general", affine_system(7, 3, seed=1, spd=False)),
        ("identity", identity_system(4, 2)),
        ("diffusion", diffusion_system(6, d=3)),
        ("advection", advection_diffusion_system(6, d=4)),
    ]


@pytest.mark.parametrize("name,system", all_systems())
def test_system_contract(name, system, rng):
    N, d = system.dim_state, system.dim_parameters
    for _ in range(5):
        lam = rng.uniform(-1, 1, d)
        u, v = rng.standard_normal((2, N))
        a, b = 0.7, -2.1
        lhs = system.apply(lam, a * u + b * v)
        rhs = a * system.apply(lam, u) + b * system.apply(lam, v)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(rhs))
        A = system.assemble(lam)
        ref = system.apply(lam, u)
        assert np.linalg.norm(A @ u - ref) <= 1e-12 * np.linalg.norm(ref)
        Ad = dense(A)
        asym = np.max(np.abs(Ad - Ad.T))
        if system.symmetric:
            assert asym == 0.0 or asym <= 1e-14 * np.max(np.abs(Ad))
        elif name == "advection" or name == "affine_general":
            assert asym > 0
        assert system.rhs(lam).shape == (N,)
        np.testing.assert_allclose(system.diagonal(lam), np.diag(Ad))


@pytest.mark.parametrize("name,system", all_systems())
def test_batch_apply_matches_pointwise(name, system, rng):
    points = rng.uniform(-1, 1, (9, system.dim_parameters))
    w = rng.standard_normal((9, system.dim_state))
    batch = system.apply_batch(system.prepare(points), w)
    for b in range(9):
        np.testing.assert_allclose(batch[b], system.apply(points[b], w[b]), rtol=1e-13, atol=1e-13)


class TestAffine:
    def test_canonical_scalar(self):
        s = affine_system(1, 1, seed=99)
        assert dense(s.assemble([0.3]))[0, 0] == pytest.approx(2.3)
        assert s.symmetric

    def test_deterministic(self):
        a, b = affine_system(6, 3, seed=4), affine_system(6, 3, seed=4)
        assert (a.A0 != b.A0).nnz == 0
        for x, y in zip(a.A_terms, b.A_terms):
            assert np.array_equal(x.toarray(), y.toarray())
        assert np.array_equal(a.b0, b.b0)

    def test_spd_on_hypercube(self, rng):
        s = affine_system(10, 4, seed=7)
        for _ in range(100):
            lam = rng.uniform(-1, 1, 4)
            assert np.linalg.eigvalsh(dense(s.assemble(lam)))[0] > 0


class TestKL:
    def test_full_rank_energy(self):
        f = kl_decompose(5, 25)
        assert f.energy_fractions[-1] == pytest.approx(1.0, abs=1e-12)

    def test_fractions_monotone(self):
        f = kl_decompose(12, 20)
        assert np.all(np.diff(f.energy_fractions) >= 0)
        assert np.all(np.diff(f.sigma) <= 1e-12)

    def test_modes_orthonormal(self):
        f = kl_decompose(10, 6)
        assert np.max(np.abs(f.modes.T @ f.modes - np.eye(6))) <= 1e-10

    def test_coefficient_positive(self, rng):
        f = kl_decompose(10, 4)
        a = f.coefficient(rng.uniform(-1, 1, (50, 4)))
        assert np.all(a > 0)
        corners = np.array(np.meshgrid(*[[-1, 1]] * 4)).reshape(4, -1).T
        assert np.all(f.coefficient(corners) > 0)

    def test_bad_mode_count(self):
        with pytest.raises(ValueError):
            kl_decompose(3, 10)


class TestDiffusion:
    def test_laplacian_eigenvalues(self):
        m = 9
        system = DiffusionSystem(m, zero_field(m + 2, 2))
        A = dense(system.assemble([0.4, -0.2]))
        h = 1 / (m + 1)
        # eigenvalues 4 sin^2(j pi h / 2) + 4 sin^2(k pi h / 2)
        j = np.arange(1, m + 1)
        lam1 = 4 * np.sin(j * np.pi * h / 2) ** 2
        ref = np.sort((lam1[:, None] + lam1[None, :]).ravel())
        np.testing.assert_allclose(np.linalg.eigvalsh(A), ref, atol=1e-12)
        assert ref[0] == pytest.approx(2 * (2 - 2 * np.cos(np.pi * h)))

    def test_exactly_symmetric(self, rng):
        system = diffusion_system(8, d=4)
        for _ in range(10):
            A = dense(system.assemble(rng.uniform(-1, 1, 4)))
            assert np.max(np.abs(A - A.T)) == 0

    def test_rhs(self):
        system = diffusion_system(5, d=2)
        np.testing.assert_allclose(system.rhs([0, 0]), np.full(25, 1 / 36))

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            DiffusionSystem(5, kl_decompose(5, 2))

    def test_galerkin_bounds(self):
        system = diffusion_system(6, d=2)
        op = make_operator(system, 2)
        lo, hi = eigenvalue_bounds(op)
        ev = np.linalg.eigvalsh(assemble_dense_galerkin(op))
        slack = 1e-10 * (1 + abs(hi))
        assert lo - slack <= ev.min() and ev.max() <= hi + slack

    def test_chunked_batch(self, rng, monkeypatch):
        import pmgalerkin.problems as problems

        system = diffusion_system(6, d=2)
        points = rng.uniform(-1, 1, (7, 2))
        w = rng.standard_normal((7, 36))
        full = system.apply_batch(system.prepare(points), w)
        monkeypatch.setattr(problems, "CACHE_BYTES", 5 * 36 * 8 * 2)
        cache = system.prepare(points)
        assert cache[1] is None
        np.testing.assert_allclose(system.apply_batch(cache, w), full, rtol=1e-14)

    def test_stencil_to_csr_roundtrip(self, rng):
        from pmgalerkin.kernels import stencil5_apply_batch_numpy

        weights = rng.standard_normal((1, 5, 4, 4))
        v = rng.standard_normal(16)
        np.testing.assert_allclose(_stencil_to_csr(weights[0]) @ v, stencil5_apply_batch_numpy(weights, v[None])[0])


class TestAdvectionDiffusion:
    def test_zero_parameters_symmetric(self):
        A = dense(advection_diffusion_system(7, d=6).assemble(np.zeros(6)))
        assert np.max(np.abs(A - A.T)) == 0

    def test_generic_nonsymmetric(self, rng):
        s = advection_diffusion_system(7, d=6)
        A = dense(s.assemble(rng.uniform(-1, 1, 6)))
        assert np.max(np.abs(A - A.T)) > 0
        assert not s.symmetric

    def test_divergence_free(self, rng):
        s = advection_diffusion_system(12, d=6)
        for _ in range(5):
            assert np.max(np.abs(s.discrete_divergence(rng.uniform(-1, 1, 6)))) <= 1e-12

    def test_upwind_diagonally_dominant(self, rng):
        s = advection_diffusion_system(9, d=6)
        A = dense(s.assemble(rng.uniform(-1, 1, 6)))
        off = np.sum(np.abs(A), axis=1) - np.abs(np.diag(A))
        assert np.all(np.diag(A) >= off - 1e-14)

    def test_central_flag(self, rng):
        central = advection_diffusion_system(6, d=3, upwind=False)
        upwind = advection_diffusion_system(6, d=3)
        still = np.r_[0.0, 0.0, rng.uniform(-1, 1)]
        np.testing.assert_array_equal(dense(central.assemble(still)), dense(upwind.assemble(still)))
        moving = rng.uniform(-1, 1, 3)
        assert np.max(np.abs(dense(central.assemble(moving)) - dense(upwind.assemble(moving)))) > 0

    def test_parameter_range(self):
        with pytest.raises(ValueError):
            advection_diffusion_system(5, d=1)
