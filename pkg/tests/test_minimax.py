import numpy as np
import pytest

from conftest import constant_density, rational_density
from gmi.classical import FunctionalSpec, solve_interpolation
from gmi.errors import ValidationError
from gmi.increments import GMIncrementSpec
from gmi.minimax import (
    DensityClassSpec,
    FClassSpec,
    GClassSpec,
    MinimaxOptions,
    budget_weight,
    feasibility_report,
    feasible_start,
    mse_functional,
    saddle_check,
    solve_minimax,
    two_atom_search,
)
from gmi.spectra import DensityGrid

SPEC11 = GMIncrementSpec((1,), (1,), (1,))
FAST = MinimaxOptions(saddle_samples=0)


@pytest.fixture(scope="module")
def budget_class():
    return DensityClassSpec(FClassSpec("D0_2", {"p": 1.5}), GClassSpec("zero"))


@pytest.fixture(scope="module")
def ball_box_class(grid2k):
    f1 = rational_density(grid2k, [1.0], [1.0, -0.4])
    V = constant_density(grid2k, 0.2)
    U = constant_density(grid2k, 0.6)
    return DensityClassSpec(
        FClassSpec("D1delta_2", {"f1": f1, "delta_k": [0.1]}),
        GClassSpec("DVU_2", {"V": V, "U": U, "q": 0.35}),
    )


class TestMseFunctional:
    def test_coincides_at_the_anchor_pair(self, grid2k):
        f0 = rational_density(grid2k, [1.0, 0.4], [1.0, -0.5])
        g0 = constant_density(grid2k, 0.5)
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [0.7]]))
        sol = solve_interpolation(SPEC11, f0, g0, fs)
        val = mse_functional(f0, g0, f0, g0, fs, SPEC11)
        assert val == pytest.approx(sol.delta, rel=1e-8)

    def test_linearity_in_f(self, grid2k):
        f0 = rational_density(grid2k, [1.0, 0.4], [1.0, -0.5])
        g0 = constant_density(grid2k, 0.5)
        fs = FunctionalSpec(N=0, a=np.array([[1.0]]))
        fa = constant_density(grid2k, 0.7)
        fb = rational_density(grid2k, [1.0], [1.0, -0.3])
        fab = DensityGrid(grid2k, fa.values + fb.values)
        zero = DensityGrid.zero(grid2k, 1)
        v_ab = mse_functional(f0, g0, fab, g0, fs, SPEC11)
        v_a = mse_functional(f0, g0, fa, g0, fs, SPEC11)
        v_b = mse_functional(f0, g0, fb, zero, fs, SPEC11)
        assert v_ab == pytest.approx(v_a + v_b, abs=1e-10 * max(1.0, v_ab))

    def test_zero_noise_kills_second_integral(self, grid2k):
        f0 = rational_density(grid2k, [1.0, 0.4], [1.0, -0.5])
        zero = DensityGrid.zero(grid2k, 1)
        fs = FunctionalSpec(N=0, a=np.array([[1.0]]))
        f_other = constant_density(grid2k, 0.9)
        # with g == 0 the value must be reproduced by the signal integral alone
        val = mse_functional(f0, zero, f_other, zero, fs, SPEC11)
        sol = solve_interpolation(SPEC11, f0, zero, fs)
        from gmi.classical import mse_of_characteristic

        assert val == pytest.approx(
            mse_of_characteristic(SPEC11, f_other, zero, fs, sol.h), rel=1e-12)


class TestFeasibleStart:
    @pytest.mark.parametrize("fkind,fparams", [
        ("D0_1", {"P": [[1.2]]}),
        ("D0_2", {"p": 1.2}),
        ("D0_3", {"p_k": [1.2]}),
        ("D0_4", {"B1": [[2.0]], "p": 1.2}),
    ])
    def test_budget_classes(self, grid2k, fkind, fparams):
        cls = DensityClassSpec(FClassSpec(fkind, fparams), GClassSpec("zero"))
        f, g = feasible_start(cls, SPEC11, grid2k, 1)
        assert feasibility_report(cls, SPEC11, f, g)["max_residual"] <= 1e-8

    @pytest.mark.parametrize("gkind", ["Deps_1", "Deps_2", "Deps_3", "Deps_4",
                                       "DVU_1", "DVU_2", "DVU_3", "DVU_4"])
    def test_noise_classes(self, grid2k, gkind):
        f1 = rational_density(grid2k, [1.0], [1.0, -0.4])
        g1 = constant_density(grid2k, 0.4)
        V = constant_density(grid2k, 0.2)
        U = constant_density(grid2k, 0.6)
        params = {
            "Deps_1": {"g1": g1, "eps": 0.5, "q": 0.5},
            "Deps_2": {"g1": g1, "eps": 0.5, "q_k": [0.5]},
            "Deps_3": {"g1": g1, "eps": 0.5, "B2": [[1.0]], "q": 0.5},
            "Deps_4": {"g1": g1, "eps": 0.5, "Q": [[0.5]]},
            "DVU_1": {"V": V, "U": U, "Q": [[0.35]]},
            "DVU_2": {"V": V, "U": U, "q": 0.35},
            "DVU_3": {"V": V, "U": U, "q_k": [0.35]},
            "DVU_4": {"V": V, "U": U, "B2": [[1.0]], "q": 0.35},
        }[gkind]
        cls = DensityClassSpec(FClassSpec("fixed", {"f1": f1}), GClassSpec(gkind, params))
        f, g = feasible_start(cls, SPEC11, grid2k, 1)
        assert feasibility_report(cls, SPEC11, f, g)["max_residual"] <= 1e-8

    def test_class_parameter_validation(self, grid2k):
        V = constant_density(grid2k, 0.6)
        U = constant_density(grid2k, 0.2)  # upside down box
        cls = DensityClassSpec(
            FClassSpec("fixed", {"f1": constant_density(grid2k, 1.0)}),
            GClassSpec("DVU_2", {"V": V, "U": U, "q": 0.4}),
        )
        with pytest.raises(ValidationError):
            feasible_start(cls, SPEC11, grid2k, 1)
        bad_eps = DensityClassSpec(
            FClassSpec("fixed", {"f1": constant_density(grid2k, 1.0)}),
            GClassSpec("Deps_1", {"g1": constant_density(grid2k, 0.4), "eps": 1.5, "q": 0.5}),
        )
        with pytest.raises(ValidationError):
            feasible_start(bad_eps, SPEC11, grid2k, 1)
        with pytest.raises(ValidationError):
            feasible_start(DensityClassSpec(
                FClassSpec("D1delta_2", {"f1": constant_density(grid2k, 1.0),
                                         "delta_k": [-0.1]}),
                GClassSpec("zero")), SPEC11, grid2k, 1)

    def test_infeasible_budget_below_floor(self, grid2k):
        g1 = constant_density(grid2k, 1.0)
        cls = DensityClassSpec(
            FClassSpec("fixed", {"f1": constant_density(grid2k, 1.0)}),
            GClassSpec("Deps_1", {"g1": g1, "eps": 0.1, "q": 0.1}),
        )
        with pytest.raises(ValidationError):
            feasible_start(cls, SPEC11, grid2k, 1)


class TestSolveMinimax:
    def test_budget_class_reaches_analytic_value(self, grid2k, budget_class):
        fs = FunctionalSpec(N=0, a=np.array([[1.0]]))
        res = solve_minimax(budget_class, fs, SPEC11, grid2k,
                            MinimaxOptions(saddle_samples=100, seed=3))
        assert res.converged
        assert res.delta0 == pytest.approx(1.5, abs=1e-3)
        deltas = [t["delta"] for t in res.trace]
        assert all(b >= a - 1e-12 for a, b in zip(deltas, deltas[1:]))
        assert res.residual_report["f"]["relative_residual"] <= 1e-2
        assert res.residual_report["f"]["budget_residual"] <= 1e-8
        assert res.saddle_report["max_violation"] <= 1e-6 * res.delta0
        assert res.saddle_report["left_min_margin"] >= -1e-10

    def test_ascent_beats_feasible_start(self, grid2k, budget_class):
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [0.5]]))
        f0, g0 = feasible_start(budget_class, SPEC11, grid2k, 1)
        start = solve_interpolation(SPEC11, f0, g0, fs).delta
        res = solve_minimax(budget_class, fs, SPEC11, grid2k, FAST)
        assert res.delta0 >= start - 1e-10

    def test_singleton_box_class(self, grid2k):
        pinned = constant_density(grid2k, 0.4)
        f1 = rational_density(grid2k, [1.0], [1.0, -0.4])
        cls = DensityClassSpec(
            FClassSpec("fixed", {"f1": f1}),
            GClassSpec("DVU_2", {"V": pinned, "U": pinned, "q": 0.4}),
        )
        fs = FunctionalSpec(N=0, a=np.array([[1.0]]))
        res = solve_minimax(cls, fs, SPEC11, grid2k, FAST)
        classical = solve_interpolation(SPEC11, f1, pinned, fs)
        assert res.delta0 == pytest.approx(classical.delta, rel=1e-10)
        assert np.allclose(res.g0.values, pinned.values)
        assert res.residual_report["g"]["relative_residual"] <= 1e-6

    def test_ball_box_class_converges(self, grid2k, ball_box_class):
        fs = FunctionalSpec(N=0, a=np.array([[1.0]]))
        res = solve_minimax(ball_box_class, fs, SPEC11, grid2k,
                            MinimaxOptions(saddle_samples=100, seed=11))
        assert res.converged
        deltas = [t["delta"] for t in res.trace]
        assert all(b >= a - 1e-12 for a, b in zip(deltas, deltas[1:]))
        assert res.residual_report["worst_iterate_feasibility"] <= 1e-8
        assert res.residual_report["f"]["budget_residual"] <= 1e-8
        assert res.residual_report["g"]["budget_residual"] <= 1e-8
        assert res.saddle_report["max_violation"] <= 1e-6 * res.delta0
        # concavity certificate: the class maximum is within the final gap
        assert res.residual_report["ascent_gap"] <= 1e-3
        brute = two_atom_search(ball_box_class, fs, SPEC11, grid2k,
                                n_positions=48, rounds=2)
        assert brute["delta"] <= res.delta0 + 1e-3

    def test_all_class_pairs_evaluable_scalar(self, grid2k):
        f1 = rational_density(grid2k, [1.0], [1.0, -0.4])
        g1 = constant_density(grid2k, 0.4)
        V = constant_density(grid2k, 0.2)
        U = constant_density(grid2k, 0.6)
        f_classes = [
            FClassSpec("D0_1", {"P": [[1.2]]}),
            FClassSpec("D0_2", {"p": 1.2}),
            FClassSpec("D0_3", {"p_k": [1.2]}),
            FClassSpec("D0_4", {"B1": [[2.0]], "p": 1.2}),
            FClassSpec("D1delta_1", {"f1": f1, "delta": 0.1}),
            FClassSpec("D1delta_2", {"f1": f1, "delta_k": [0.1]}),
            FClassSpec("D1delta_3", {"f1": f1, "B1": [[1.0]], "delta": 0.1}),
            FClassSpec("D1delta_4", {"f1": f1, "delta_ij": [[0.1]]}),
        ]
        g_classes = [
            GClassSpec("Deps_1", {"g1": g1, "eps": 0.5, "q": 0.5}),
            GClassSpec("Deps_2", {"g1": g1, "eps": 0.5, "q_k": [0.5]}),
            GClassSpec("Deps_3", {"g1": g1, "eps": 0.5, "B2": [[1.0]], "q": 0.5}),
            GClassSpec("Deps_4", {"g1": g1, "eps": 0.5, "Q": [[0.5]]}),
            GClassSpec("DVU_1", {"V": V, "U": U, "Q": [[0.35]]}),
            GClassSpec("DVU_2", {"V": V, "U": U, "q": 0.35}),
            GClassSpec("DVU_3", {"V": V, "U": U, "q_k": [0.35]}),
            GClassSpec("DVU_4", {"V": V, "U": U, "B2": [[1.0]], "q": 0.35}),
        ]
        fs = FunctionalSpec(N=0, a=np.array([[1.0]]))
        opts = MinimaxOptions(max_iter=4, saddle_samples=0)
        for fc, gc in zip(f_classes, g_classes):
            res = solve_minimax(DensityClassSpec(fc, gc), fs, SPEC11, grid2k, opts)
            assert np.isfinite(res.delta0) and res.delta0 > 0
            assert res.residual_report["worst_iterate_feasibility"] <= 1e-8


    def test_matrix_classes_evaluable(self, grid2k):
        # trace-type classes stay exact at T = 2; three ascent steps must run
        rng = np.random.default_rng(8)
        gmat = rng.standard_normal((2, 2))
        V = constant_density(grid2k, 0.05 * gmat @ gmat.T + 0.1 * np.eye(2))
        U = DensityGrid(grid2k, V.values + np.broadcast_to(
            0.4 * np.eye(2), V.values.shape), validate=False)
        cls = DensityClassSpec(
            FClassSpec("D0_2", {"p": 2.0}),
            GClassSpec("DVU_2", {"V": V, "U": U,
                                 "q": float(np.mean(np.trace(V.values, axis1=1, axis2=2).real))
                                 + 0.3}),
        )
        fs = FunctionalSpec(N=1, a=rng.standard_normal((2, 2)))
        res = solve_minimax(cls, fs, SPEC11, grid2k, MinimaxOptions(max_iter=3, saddle_samples=0))
        assert np.isfinite(res.delta0) and res.delta0 > 0
        assert res.residual_report["worst_iterate_feasibility"] <= 1e-8
        deltas = [t["delta"] for t in res.trace]
        assert all(b >= a - 1e-12 for a, b in zip(deltas, deltas[1:]))


class TestSaddle:
    def test_empty_report_passes(self, grid2k, budget_class):
        fs = FunctionalSpec(N=0, a=np.array([[1.0]]))
        res = solve_minimax(budget_class, fs, SPEC11, grid2k, FAST)
        rep = saddle_check(res, budget_class, fs, SPEC11, n_samples=0)
        assert rep["pass"] and rep["n_samples"] == 0

    def test_alternative_characteristics_never_beat_optimum(self, grid2k, budget_class):
        fs = FunctionalSpec(N=1, a=np.array([[1.0], [0.5]]))
        res = solve_minimax(budget_class, fs, SPEC11, grid2k, FAST)
        rep = saddle_check(res, budget_class, fs, SPEC11, n_samples=20, seed=9)
        assert rep["left_min_margin"] >= -1e-10


class TestBruteForce:
    def test_smooth_family_matches_budget_optimum(self, grid2k, budget_class):
        fs = FunctionalSpec(N=0, a=np.array([[1.0]]))
        res = solve_minimax(budget_class, fs, SPEC11, grid2k, FAST)
        brute = two_atom_search(budget_class, fs, SPEC11, grid2k, n_positions=32)
        assert abs(res.delta0 - brute["delta"]) <= 1e-3

    def test_budget_weight_positive(self, grid2k):
        w = budget_weight(SPEC11, grid2k)
        assert np.all(w > 0)
