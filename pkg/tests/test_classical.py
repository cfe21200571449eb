import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constant_density, matrix_ma_density, pchi_one_density, rational_density
from gmi.classical import (
    FunctionalSpec,
    PeriodicFunctionalSpec,
    coeffs_a_mu,
    fourier_blocks,
    lift_periodic,
    mse_of_characteristic,
    mse_value,
    padded_b,
    solve_interpolation,
    solve_system,
    spectral_characteristic,
    transform_b,
    v_coeffs,
)
from gmi.increments import GMIncrementSpec
from gmi.spectra import DensityGrid, FrequencyGrid, _chi_beta

SPEC11 = GMIncrementSpec((1,), (1,), (1,))


class TestLiftPeriodic:
    def test_padding_rule(self):
        p = PeriodicFunctionalSpec(M=4, T=2, a_scalar=[1.0, 2.0, 3.0, 4.0, 5.0])
        fs = lift_periodic(p)
        assert fs.N == 2
        assert fs.a.tolist() == [[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]]

    def test_trivial_period(self):
        p = PeriodicFunctionalSpec(M=3, T=1, a_scalar=[1.0, 2.0, 3.0, 4.0])
        fs = lift_periodic(p)
        assert fs.N == 3
        assert fs.a.ravel().tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_single_padded_block(self):
        p = PeriodicFunctionalSpec(M=2, T=4, a_scalar=[1.0, 2.0, 3.0])
        fs = lift_periodic(p)
        assert fs.N == 0
        assert fs.a.tolist() == [[1.0, 2.0, 3.0, 0.0]]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 12), st.integers(0, 10_000))
    def test_lift_preserves_weights(self, T, M, seed):
        rng = np.random.default_rng(seed)
        a_scalar = rng.standard_normal(M + 1)
        fs = lift_periodic(PeriodicFunctionalSpec(M=M, T=T, a_scalar=a_scalar))
        assert fs.N == M // T
        assert fs.a.shape == (fs.N + 1, T)
        flat = fs.a.ravel()
        assert np.allclose(flat[: M + 1], a_scalar)
        assert np.all(flat[M + 1:] == 0.0)


class TestWeightTransforms:
    def test_cumulative_sums_for_first_difference(self):
        fs = FunctionalSpec(N=2, a=np.array([[1.0], [2.0], [3.0]]))
        b = transform_b(SPEC11, fs)
        assert b.ravel().tolist() == [6.0, 5.0, 3.0]

    def test_order_two_weights(self):
        spec = GMIncrementSpec((1,), (1,), (2,))
        fs = FunctionalSpec(N=2, a=np.array([[1.0], [1.0], [1.0]]))
        b = transform_b(spec, fs)
        # b(k) = sum_{m>=k} (m-k+1) a(m)
        assert b.ravel().tolist() == [6.0, 3.0, 1.0]

    def test_single_point(self):
        spec = GMIncrementSpec((2, 3), (1, 2), (1, 1))
        fs = FunctionalSpec(N=0, a=np.array([[2.5]]))
        assert transform_b(spec, fs).ravel().tolist() == [2.5]

    def test_a_mu_hand_convolution(self):
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [2.0]]))
        out = coeffs_a_mu(SPEC11, fs)
        assert out.ravel().tolist() == [-1.0, -1.0, 2.0]

    def test_a_mu_zero_weights(self):
        fs = FunctionalSpec(N=1, a=np.zeros((2, 1)))
        assert np.all(coeffs_a_mu(SPEC11, fs) == 0)

    def test_a_mu_annihilates_constants(self):
        spec = GMIncrementSpec((2, 3), (1, 1), (1, 1))
        fs = FunctionalSpec(N=3, a=np.random.default_rng(0).standard_normal((4, 1)))
        out = coeffs_a_mu(spec, fs)
        assert abs(np.sum(out)) < 1e-12

    def test_v_first_difference(self):
        fs = FunctionalSpec(N=0, a=np.array([[1.5]]))
        b = transform_b(SPEC11, fs)
        v = v_coeffs(SPEC11, b)
        assert v.ravel().tolist() == [-1.5]

    def test_v_with_step_two(self):
        spec = GMIncrementSpec((1,), (2,), (1,))  # expansion [1, 0, -1]
        fs = FunctionalSpec(N=0, a=np.array([[1.5]]))
        v = v_coeffs(spec, transform_b(spec, fs))
        # rows are k = -1, -2
        assert v.ravel().tolist() == [0.0, -1.5]

    def test_v_zero_weights(self):
        fs = FunctionalSpec(N=2, a=np.zeros((3, 1)))
        v = v_coeffs(SPEC11, transform_b(SPEC11, fs))
        assert np.all(v == 0)

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from([(1, 1, 1), (1, 1, 2), (2, 1, 1), (1, 2, 1), (3, 2, 2)]),
           st.integers(0, 4), st.integers(0, 10_000))
    def test_target_decomposition_identity(self, sml, N, seed):
        # sum_k b(k)^T (chi zeta)(k) = sum_k a(k)^T zeta(k) + sum_{k<0} v(k)^T zeta(k)
        # for arbitrary sequences zeta, which pins b and v jointly
        from gmi.increments import expand_operator

        s, mu, d = sml
        spec = GMIncrementSpec((s,), (mu,), (d,))
        ng = spec.n_gamma()
        rng = np.random.default_rng(seed)
        T = int(rng.integers(1, 3))
        fs = FunctionalSpec(N=N, a=rng.standard_normal((N + 1, T)))
        b = transform_b(spec, fs)
        v = v_coeffs(spec, b)
        e = expand_operator(spec).astype(float)
        zeta = {k: rng.standard_normal(T) for k in range(-ng, N + 1)}

        lhs = 0.0
        for k in range(N + 1):
            diff_k = sum(e[l] * zeta[k - l] for l in range(ng + 1))
            lhs += float(b[k] @ diff_k)
        rhs = sum(float(fs.a[k] @ zeta[k]) for k in range(N + 1))
        rhs += sum(float(v[i] @ zeta[-(i + 1)]) for i in range(ng))
        assert lhs == pytest.approx(rhs, abs=1e-9 * max(1.0, abs(lhs)))


class TestFourierBlocks:
    def test_zero_noise_kills_t_and_q(self, grid1k):
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = DensityGrid.zero(grid1k, 1)
        blocks = fourier_blocks(SPEC11, f, g, N=1)
        assert np.all(blocks.T == 0)
        assert np.all(blocks.Q == 0)

    def test_whitened_gives_identity(self, grid1k):
        f = pchi_one_density(SPEC11, grid1k)
        blocks = fourier_blocks(SPEC11, f, DensityGrid.zero(grid1k, 1), N=1)
        assert np.allclose(blocks.P, np.eye(3), atol=1e-10)

    def test_grid_self_convergence(self):
        coarse, fine = FrequencyGrid(4096), FrequencyGrid(16384)
        vals = []
        for grid in (coarse, fine):
            f = constant_density(grid, 1.0)
            g = constant_density(grid, 0.5)
            vals.append(fourier_blocks(SPEC11, f, g, N=1).P)
        assert np.max(np.abs(vals[0] - vals[1])) < 1e-6

    def test_hermitian_p(self, grid1k):
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = constant_density(grid1k, 0.3)
        blocks = fourier_blocks(SPEC11, f, g, N=2)
        assert np.allclose(blocks.P, blocks.P.conj().T, atol=1e-12)
        assert np.allclose(blocks.Q, blocks.Q.conj().T, atol=1e-12)


class TestSolveSystem:
    def test_identity_system(self, grid1k):
        f = pchi_one_density(SPEC11, grid1k)
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [1.0]]))
        blocks = fourier_blocks(SPEC11, f, DensityGrid.zero(grid1k, 1), N=1)
        b = transform_b(SPEC11, fs)
        sol = solve_system(blocks, b, coeffs_a_mu(SPEC11, fs))
        assert np.allclose(sol.c.reshape(-1), padded_b(b, 1), atol=1e-10)

    def test_zero_weights(self, grid1k):
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = constant_density(grid1k, 0.5)
        fs = FunctionalSpec(N=1, a=np.zeros((2, 1)))
        blocks = fourier_blocks(SPEC11, f, g, N=1)
        sol = solve_system(blocks, transform_b(SPEC11, fs), coeffs_a_mu(SPEC11, fs))
        assert np.allclose(sol.c, 0.0)

    def test_residual_small(self, grid1k):
        f = constant_density(grid1k, 1.0)
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [1.0]]))
        blocks = fourier_blocks(SPEC11, f, DensityGrid.zero(grid1k, 1), N=1)
        b = transform_b(SPEC11, fs)
        sol = solve_system(blocks, b, coeffs_a_mu(SPEC11, fs))
        rhs = padded_b(b, 1)
        assert np.linalg.norm(blocks.P @ sol.c.reshape(-1) - rhs) <= 1e-10 * np.linalg.norm(rhs)


class TestSpectralCharacteristic:
    def test_zero_weights_zero_h(self, grid1k):
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = constant_density(grid1k, 0.5)
        fs = FunctionalSpec(N=1, a=np.zeros((2, 1)))
        h, h1, h2 = spectral_characteristic(SPEC11, f, g, np.zeros((3, 1)), fs)
        assert np.max(np.abs(h)) < 1e-14

    def test_split_identity(self, grid1k):
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = constant_density(grid1k, 0.5)
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [0.7]]))
        sol = solve_interpolation(SPEC11, f, g, fs)
        assert np.max(np.abs(sol.h1 - sol.h2 - sol.h)) < 1e-12 * max(1.0, np.max(np.abs(sol.h)))

    def test_zero_noise_reduction(self, grid1k):
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = DensityGrid.zero(grid1k, 1)
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [0.7]]))
        sol = solve_interpolation(SPEC11, f, g, fs)
        # direct evaluation of the reduced zero-noise formula
        lam = grid1k.nodes
        chi, beta = _chi_beta((1,), (1,), (1,), lam)
        b = transform_b(SPEC11, fs)
        B = np.exp(1j * np.outer(lam, np.arange(2))) @ b.astype(complex)
        C = np.exp(1j * np.outer(lam, np.arange(3))) @ sol.c.astype(complex)
        expected = B * (chi / beta)[:, None] - C * (np.conj(beta) / np.conj(chi))[:, None] \
            / f.scalar()[:, None]
        assert np.max(np.abs(sol.h - expected)) < 1e-10 * np.max(np.abs(expected))


class TestMse:
    def test_zero_weights(self, grid1k):
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = constant_density(grid1k, 0.5)
        fs = FunctionalSpec(N=1, a=np.zeros((2, 1)))
        sol = solve_interpolation(SPEC11, f, g, fs)
        assert sol.delta == pytest.approx(0.0, abs=1e-14)

    def test_whitened_collapse(self, grid1k):
        f = pchi_one_density(SPEC11, grid1k)
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [1.0]]))
        sol = solve_interpolation(SPEC11, f, DensityGrid.zero(grid1k, 1), fs)
        b = transform_b(SPEC11, fs)
        assert sol.delta == pytest.approx(float(np.sum(b ** 2)), rel=1e-10)

    def test_dual_route_agreement(self, grid2k):
        f = rational_density(grid2k, [1.0], [1.0, -0.5])
        g = constant_density(grid2k, 0.5)
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [1.0]]))
        sol = solve_interpolation(SPEC11, f, g, fs)
        report = mse_value(SPEC11, f, g, fs, sol.c)
        assert report.difference <= 1e-6 * abs(report.algebraic)

    @pytest.mark.parametrize("alpha", [-1.0, 2.0, 10.0])
    def test_scaling_equivariance(self, grid1k, alpha):
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = constant_density(grid1k, 0.5)
        a = np.array([[1.0], [0.7]])
        base = solve_interpolation(SPEC11, f, g, FunctionalSpec(N=1, a=a))
        scaled = solve_interpolation(SPEC11, f, g, FunctionalSpec(N=1, a=alpha * a))
        assert np.allclose(scaled.c, alpha * base.c, rtol=1e-9, atol=1e-12)
        assert np.allclose(scaled.v, alpha * base.v, rtol=1e-9, atol=1e-12)
        assert np.allclose(scaled.h, alpha * base.h, rtol=1e-9, atol=1e-10)
        assert scaled.delta == pytest.approx(alpha ** 2 * base.delta, rel=1e-9)

    def test_orthogonality_coefficients_vanish(self, grid1k):
        spec = GMIncrementSpec((2,), (1,), (1,))
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = constant_density(grid1k, 0.5)
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [0.7]]))
        sol = solve_interpolation(spec, f, g, fs)
        lam = grid1k.nodes
        chi, beta = _chi_beta(spec.s, spec.mu, spec.d, lam)
        psi = sol.h * (beta / chi)[:, None]
        ng = spec.n_gamma()
        # int psi e^{-i j l} dl = 0 for j = 0 .. N + n_gamma
        residual = grid1k.fourier(psi, [-j for j in range(0, fs.N + ng + 1)])
        scale = max(float(np.max(np.abs(sol.b))), 1.0)
        assert np.max(np.abs(residual)) <= 1e-6 * scale

    def test_delta_below_target_variance(self, grid1k):
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = constant_density(grid1k, 0.5)
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [0.7]]))
        sol = solve_interpolation(SPEC11, f, g, fs)
        target_var = mse_of_characteristic(SPEC11, f, g, fs, np.zeros((1024, 1)))
        assert 0.0 <= sol.delta <= target_var + 1e-12

    def test_matrix_case_dual_route(self, grid2k):
        rng = np.random.default_rng(5)
        f = matrix_ma_density(grid2k, [rng.standard_normal((2, 2)) + 2 * np.eye(2),
                                       0.5 * rng.standard_normal((2, 2))])
        gm = rng.standard_normal((2, 2))
        g = constant_density(grid2k, 0.2 * gm @ gm.T + 0.3 * np.eye(2))
        fs = FunctionalSpec(N=1, a=rng.standard_normal((2, 2)))
        sol = solve_interpolation(SPEC11, f, g, fs)
        assert abs(sol.delta - sol.delta_spectral) <= 1e-6 * sol.delta


class TestBookkeeping:
    def test_solution_dimensions(self, grid1k):
        spec = GMIncrementSpec((2, 3), (1, 1), (1, 1))
        f = rational_density(grid1k, [1.0, 0.4], [1.0, -0.5])
        g = constant_density(grid1k, 0.5)
        fs = FunctionalSpec(N=2, a=np.ones((3, 1)))
        sol = solve_interpolation(spec, f, g, fs)
        ng = spec.n_gamma()
        assert sol.c.shape == (fs.N + ng + 1, 1)
        assert sol.b.shape == (fs.N + 1, 1)
        assert sol.a_mu.shape == (fs.N + ng + 1, 1)
        assert sol.v.shape == (ng, 1)
        assert sol.h.shape == (grid1k.n_grid, 1)
        assert sol.delta >= 0

    def test_matrix_structural_toeplitz_psd(self, grid1k):
        from gmi.spectra import structural_function

        rng = np.random.default_rng(3)
        f = matrix_ma_density(grid1k, [rng.standard_normal((2, 2)) + 2 * np.eye(2),
                                       0.3 * rng.standard_normal((2, 2))])
        lags = [structural_function(SPEC11, f, m) for m in range(6)]
        big = np.empty((12, 12), dtype=complex)
        for i in range(6):
            for j in range(6):
                blk = lags[i - j] if i >= j else lags[j - i].conj().T
                big[2 * i:2 * i + 2, 2 * j:2 * j + 2] = blk
        assert np.min(np.linalg.eigvalsh(0.5 * (big + big.conj().T))) > -1e-8


class TestPeriodicLifting:
    @pytest.mark.parametrize("T,M", [(2, 5), (3, 5), (2, 11), (3, 8)])
    def test_lift_matches_hand_blocking(self, grid1k, T, M):
        rng = np.random.default_rng(T * 100 + M)
        a_scalar = rng.standard_normal(M + 1)
        lifted = lift_periodic(PeriodicFunctionalSpec(M=M, T=T, a_scalar=a_scalar))

        # hand blocking, written independently of lift_periodic
        N = M // T
        a = np.zeros((N + 1, T))
        for m in range(N + 1):
            for p in range(1, T + 1):
                k = m * T + p - 1
                if k <= M:
                    a[m, p - 1] = a_scalar[k]
        direct = FunctionalSpec(N=N, a=a)

        rng2 = np.random.default_rng(1)
        h0 = rng2.standard_normal((T, T)) + 2 * np.eye(T)
        f = matrix_ma_density(grid1k, [h0, 0.4 * rng2.standard_normal((T, T))])
        gmat = rng2.standard_normal((T, T))
        g = constant_density(grid1k, 0.2 * gmat @ gmat.T + 0.2 * np.eye(T))

        sol_lift = solve_interpolation(SPEC11, f, g, lifted)
        sol_direct = solve_interpolation(SPEC11, f, g, direct)
        assert sol_lift.delta == pytest.approx(sol_direct.delta, abs=1e-10)
