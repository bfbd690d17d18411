import numpy as np
import pytest

from jointvar.solver import (
    EffectsDecomposition,
    LambdaGrid,
    MultiVarProblem,
    PenaltySpec,
    SolverConfig,
    build_grid,
    fista_solve,
    fit_path,
    lambda_max,
    objective,
    prox_weighted_l1,
    smooth_grad,
    smooth_loss,
    solve_single,
)
from jointvar.var_core import MultiSubjectSeries, SubjectSeries, VarModel, simulate_var

from oracles import cd_multivar, cd_single, multi_objective, prox_scalar_search, single_objective

TIGHT = SolverConfig(max_iter=20000, tol=1e-10)


def random_dataset(rng, d=3, k=2, t_len=25, density=0.3):
    subjects = []
    truths = []
    for i in range(k):
        phi = np.where(rng.random((d, d)) < density, rng.uniform(0.2, 0.6, (d, d)), 0.0)
        rho = np.max(np.abs(np.linalg.eigvals(phi)))
        if rho >= 0.9:
            phi *= 0.85 / rho
        model = VarModel(phi=(phi,), noise_cov=np.eye(d))
        subjects.append(
            simulate_var(model, t_len, burn_in=30, seed=rng.integers(2**31),
                         subject_id=f"s{i}")
        )
        truths.append(model)
    return MultiSubjectSeries(tuple(subjects)), truths


def raw_mats(data, p=1):
    from jointvar.var_core import build_regression

    forms = [build_regression(s, p) for s in data]
    return [f.y for f in forms], [f.z for f in forms]


class TestProblem:
    def test_suffstats_match_raw_objective(self):
        rng = np.random.default_rng(0)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        ys, zs = raw_mats(data)
        dec = EffectsDecomposition(
            common=rng.standard_normal((3, 3)) * 0.2,
            unique=rng.standard_normal((2, 3, 3)) * 0.2,
        )
        lam2 = np.array([0.05, 0.07])
        pen = PenaltySpec(lambda1=0.1, lambda2=lam2)
        direct = multi_objective(ys, zs, dec.common, dec.unique, 0.1, lam2)
        assert objective(prob, dec, pen) == pytest.approx(direct, rel=1e-12)

    def test_zero_params_zero_penalty(self):
        rng = np.random.default_rng(1)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        dec = EffectsDecomposition.zeros(2, 3, 3)
        pen = PenaltySpec(lambda1=0.0, lambda2=np.zeros(2))
        ys, _ = raw_mats(data)
        expected = sum(np.sum(y * y) for y in ys) / sum(y.size for y in ys)
        assert objective(prob, dec, pen) == pytest.approx(expected, rel=1e-12)

    def test_exact_fit_gives_zero(self):
        rng = np.random.default_rng(2)
        d = 2
        phi = np.array([[0.5, 0.0], [0.2, 0.3]])
        model = VarModel(phi=(phi,), noise_cov=np.zeros((d, d)))
        series = simulate_var(model, 20, burn_in=3, seed=5,
                              init=rng.standard_normal((d, 1)))
        data = MultiSubjectSeries((series,))
        prob = MultiVarProblem.from_series(data, 1)
        dec = EffectsDecomposition(common=phi, unique=np.zeros((1, d, d)))
        pen = PenaltySpec(lambda1=0.0, lambda2=np.zeros(1))
        assert objective(prob, dec, pen) == pytest.approx(0.0, abs=1e-16)

    def test_k1_common_zero_matches_single_subject_objective(self):
        rng = np.random.default_rng(3)
        data, _ = random_dataset(rng, k=1)
        prob = MultiVarProblem.from_series(data, 1)
        ys, zs = raw_mats(data)
        phi = rng.standard_normal((3, 3)) * 0.3
        w = rng.uniform(0.5, 2.0, (3, 3))

        class W:
            common_weights = np.ones((3, 3))
            unique_weights = w[None]

        dec = EffectsDecomposition(common=np.zeros((3, 3)), unique=phi[None])
        pen = PenaltySpec(lambda1=0.3, lambda2=np.array([0.2]), weights=W())
        direct = single_objective(ys[0], zs[0], phi, 0.2, w)
        assert objective(prob, dec, pen) == pytest.approx(direct, rel=1e-12)


class TestProx:
    def test_closed_form_values(self):
        assert prox_weighted_l1(np.array([0.5]), 0.2, np.array([1.0]))[0] == pytest.approx(0.3)
        assert prox_weighted_l1(np.array([0.15]), 0.2, np.array([1.0]))[0] == 0.0
        v = np.array([-0.7, 0.4])
        np.testing.assert_array_equal(prox_weighted_l1(v, 0.0, np.ones(2)), v)

    def test_matches_scalar_grid_search(self):
        rng = np.random.default_rng(4)
        for _ in range(60):
            v = rng.uniform(-2, 2)
            thr = rng.uniform(0, 1)
            w = rng.uniform(0.1, 3)
            ours = prox_weighted_l1(np.array([[v]]), thr, np.array([[w]]))[0, 0]
            assert abs(ours - prox_scalar_search(v, thr, w)) < 1e-10

    def test_is_exact_minimizer_on_scalar_grid(self):
        # direct check of the prox characterization at tolerance 1e-10
        rng = np.random.default_rng(5)
        for _ in range(25):
            v = rng.uniform(-1.5, 1.5)
            lam = rng.uniform(0, 0.8)
            x_star = prox_weighted_l1(np.array([v]), lam, None)[0]
            ref = prox_scalar_search(v, lam, 1.0)
            assert abs(x_star - ref) < 1e-10

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            prox_weighted_l1(np.zeros(2), -0.1)


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            data, _ = random_dataset(rng, d=2, k=2, t_len=20)
            prob = MultiVarProblem.from_series(data, 1)
            common = rng.standard_normal((2, 2)) * 0.3
            unique = rng.standard_normal((2, 2, 2)) * 0.3
            gc, gu = smooth_grad(prob, common, unique)
            eps = 1e-6
            for i in range(2):
                for j in range(2):
                    cp, cm = common.copy(), common.copy()
                    cp[i, j] += eps
                    cm[i, j] -= eps
                    fd = (smooth_loss(prob, cp[None] + unique)
                          - smooth_loss(prob, cm[None] + unique)) / (2 * eps)
                    assert gc[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-8)
            for s in range(2):
                up, um = unique.copy(), unique.copy()
                up[s, 0, 1] += eps
                um[s, 0, 1] -= eps
                fd = (smooth_loss(prob, common[None] + up)
                      - smooth_loss(prob, common[None] + um)) / (2 * eps)
                assert gu[s, 0, 1] == pytest.approx(fd, rel=1e-5, abs=1e-8)


class TestFista:
    def test_matches_coordinate_descent_oracle(self):
        rng = np.random.default_rng(7)
        data, _ = random_dataset(rng, d=2, k=2, t_len=20)
        prob = MultiVarProblem.from_series(data, 1)
        ys, zs = raw_mats(data)
        l1max, l2max = lambda_max(prob)
        lam1 = 0.3 * l1max
        lam2 = 0.3 * l2max
        pen = PenaltySpec(lambda1=lam1, lambda2=lam2)
        dec, info = fista_solve(prob, pen, TIGHT)
        c_cd, u_cd = cd_multivar(ys, zs, lam1, lam2)
        f_fista = multi_objective(ys, zs, dec.common, dec.unique, lam1, lam2)
        f_cd = multi_objective(ys, zs, c_cd, u_cd, lam1, lam2)
        assert f_fista <= f_cd + 1e-6

    def test_huge_lambda1_zeroes_common(self):
        rng = np.random.default_rng(8)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        l1max, l2max = lambda_max(prob)
        pen = PenaltySpec(lambda1=1.5 * l1max, lambda2=0.4 * l2max)
        dec, _ = fista_solve(prob, pen, TIGHT)
        assert np.all(dec.common == 0.0)
        assert np.any(dec.unique != 0.0)
        np.testing.assert_array_equal(dec.totals, dec.unique)

    def test_huge_lambda2_gives_pooled_fit(self):
        rng = np.random.default_rng(9)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        l1max, l2max = lambda_max(prob)
        pen = PenaltySpec(lambda1=0.2 * l1max, lambda2=1.5 * l2max)
        dec, _ = fista_solve(prob, pen, TIGHT)
        assert np.all(dec.unique == 0.0)
        assert np.any(dec.common != 0.0)
        totals = dec.totals
        for k in range(data.k):
            np.testing.assert_array_equal(totals[k], dec.common)

    def test_final_objective_below_warm_start_and_zero(self):
        rng = np.random.default_rng(10)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        l1max, l2max = lambda_max(prob)
        pen = PenaltySpec(lambda1=0.1 * l1max, lambda2=0.1 * l2max)
        warm = EffectsDecomposition(
            common=rng.standard_normal((3, 3)) * 0.1,
            unique=rng.standard_normal((2, 3, 3)) * 0.1,
        )
        dec, info = fista_solve(prob, pen, warm_start=warm)
        assert info.objective <= objective(prob, warm, pen) + 1e-12
        zero = EffectsDecomposition.zeros(2, 3, 3)
        assert info.objective <= objective(prob, zero, pen) + 1e-12

    def test_k1_with_lambda1_max_matches_single_subject_solver(self):
        rng = np.random.default_rng(11)
        data, _ = random_dataset(rng, k=1)
        prob = MultiVarProblem.from_series(data, 1)
        ys, zs = raw_mats(data)
        l1max, l2max = lambda_max(prob)
        lam = 0.3 * float(l2max[0])
        pen = PenaltySpec(lambda1=1.2 * l1max, lambda2=np.array([lam]))
        dec, _ = fista_solve(prob, pen, SolverConfig(max_iter=100000, tol=1e-14))
        ref = cd_single(ys[0], zs[0], lam)
        np.testing.assert_allclose(dec.totals[0], ref, atol=1e-6)

    def test_decomposition_totals_always_common_plus_unique(self):
        rng = np.random.default_rng(12)
        dec = EffectsDecomposition(
            common=rng.standard_normal((2, 2)),
            unique=rng.standard_normal((3, 2, 2)),
        )
        np.testing.assert_array_equal(dec.totals, dec.common[None] + dec.unique)

    def test_support_union_and_cancellation_flag(self):
        common = np.array([[0.5, 0.0], [0.0, 0.3]])
        unique = np.array([[[-0.5, 0.2], [0.0, 0.0]]])
        dec = EffectsDecomposition(common=common, unique=unique)
        mask = dec.cancellation_mask(1e-12)
        assert mask[0, 0, 0]  # 0.5 + (-0.5) cancels exactly
        assert not mask[0, 0, 1]
        union = (common[None] != 0) | (unique != 0)
        totals_nz = np.abs(dec.totals) > 1e-12
        np.testing.assert_array_equal(totals_nz | mask, union)


class TestSolveSingle:
    def test_matches_cd_oracle(self):
        rng = np.random.default_rng(13)
        data, _ = random_dataset(rng, k=1, d=3)
        prob = MultiVarProblem.from_series(data, 1)
        ys, zs = raw_mats(data)
        _, l2max = lambda_max(prob)
        lam = 0.25 * float(l2max[0])
        w = rng.uniform(0.5, 2.0, (3, 3))
        phi, _ = solve_single(prob, lam, w, TIGHT)
        ref = cd_single(ys[0], zs[0], lam, w)
        f_ours = single_objective(ys[0], zs[0], phi, lam, w)
        f_ref = single_objective(ys[0], zs[0], ref, lam, w)
        assert f_ours <= f_ref + 1e-8

    def test_zero_lambda_approaches_ols(self):
        rng = np.random.default_rng(14)
        data, _ = random_dataset(rng, k=1, d=2, t_len=60)
        prob = MultiVarProblem.from_series(data, 1)
        ys, zs = raw_mats(data)
        ols = np.linalg.lstsq(zs[0].T, ys[0].T, rcond=None)[0].T
        phi, _ = solve_single(prob, 0.0, None, TIGHT)
        np.testing.assert_allclose(phi, ols, atol=1e-6)


class TestLambdaMax:
    def test_zero_data_gives_zero(self):
        zero = SubjectSeries(np.zeros((2, 12)))
        prob = MultiVarProblem.from_series(MultiSubjectSeries((zero,)), 1)
        l1, l2 = lambda_max(prob)
        assert l1 == 0.0
        np.testing.assert_array_equal(l2, np.zeros(1))

    def test_solution_exactly_zero_just_above_max(self):
        rng = np.random.default_rng(15)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        l1max, l2max = lambda_max(prob)
        pen = PenaltySpec(lambda1=1.01 * l1max, lambda2=1.01 * l2max)
        dec, _ = fista_solve(prob, pen, TIGHT)
        assert np.all(dec.common == 0.0)
        assert np.all(dec.unique == 0.0)

    def test_doubling_weights_halves_max(self):
        rng = np.random.default_rng(16)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)

        class W:
            def __init__(self, factor):
                self.common_weights = factor * np.ones((3, 3))
                self.unique_weights = factor * np.ones((2, 3, 3))

        l1a, l2a = lambda_max(prob, W(1.0))
        l1b, l2b = lambda_max(prob, W(2.0))
        assert l1b == pytest.approx(l1a / 2.0, rel=1e-12)
        np.testing.assert_allclose(l2b, l2a / 2.0, rtol=1e-12)


class TestGridAndPath:
    def test_single_point_grid(self):
        rng = np.random.default_rng(17)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        grid = build_grid(prob, n1=1, n2=1)
        l1max, l2max = lambda_max(prob)
        assert grid.lambda1.size == 1
        assert grid.lambda1[0] == pytest.approx(l1max)
        assert grid.lambda2_scale[0] == 1.0

    def test_log_spacing_endpoints(self):
        rng = np.random.default_rng(18)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        grid = build_grid(prob, n1=10, n2=10, ratio=0.01)
        l1max, _ = lambda_max(prob)
        assert grid.lambda1[0] == pytest.approx(l1max)
        assert grid.lambda1[-1] == pytest.approx(0.01 * l1max)
        ratios = grid.lambda1[1:] / grid.lambda1[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-10)
        assert grid.shape == (10, 10)

    def test_default_grid_has_100_cells(self):
        rng = np.random.default_rng(19)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        grid = build_grid(prob)
        assert grid.shape[0] * grid.shape[1] == 100

    def test_path_largest_cell_all_zero(self):
        rng = np.random.default_rng(20)
        data, _ = random_dataset(rng)
        prob = MultiVarProblem.from_series(data, 1)
        grid = build_grid(prob, n1=3, n2=3)
        path = fit_path(prob, grid)
        top = path.solutions[(0, 0)]
        assert np.all(top.common == 0.0)
        assert np.all(top.unique == 0.0)

    def test_warm_equals_cold_within_tolerance(self):
        rng = np.random.default_rng(21)
        data, _ = random_dataset(rng, d=3, k=2)
        prob = MultiVarProblem.from_series(data, 1)
        grid = build_grid(prob, n1=4, n2=4)
        cfg = SolverConfig(max_iter=20000, tol=1e-11)
        path = fit_path(prob, grid, cfg=cfg)
        ys, zs = raw_mats(data)
        for cell in ((1, 2), (3, 3)):
            pen = grid.penalty(*cell)
            cold, _ = fista_solve(prob, pen, cfg)
            f_warm = multi_objective(ys, zs, path.solutions[cell].common,
                                     path.solutions[cell].unique,
                                     pen.lambda1, pen.lambda2)
            f_cold = multi_objective(ys, zs, cold.common, cold.unique,
                                     pen.lambda1, pen.lambda2)
            assert abs(f_warm - f_cold) < 1e-6

    def test_sparsity_mostly_monotone_along_lambda2(self):
        rng = np.random.default_rng(22)
        agree = 0
        total = 0
        for _ in range(3):
            data, _ = random_dataset(rng)
            prob = MultiVarProblem.from_series(data, 1)
            grid = build_grid(prob, n1=2, n2=8)
            path = fit_path(prob, grid)
            for i in range(2):
                nnz = [
                    int(np.count_nonzero(path.solutions[(i, j)].unique))
                    for j in range(8)
                ]
                for a, b in zip(nnz, nnz[1:]):
                    total += 1
                    if b >= a:
                        agree += 1
        assert agree / total >= 0.9

    def test_grid_validation(self):
        with pytest.raises(ValueError, match="descending"):
            LambdaGrid(lambda1=np.array([0.1, 0.5]), lambda2_scale=np.array([1.0]),
                       lambda2_max=np.array([1.0]))
