import numpy as np
import pytest

from jointvar.var_core import (
    MultiSubjectSeries,
    RankDeficientDesign,
    SubjectSeries,
    VarModel,
    build_regression,
    center,
    companion_matrix,
    fit_ols,
    is_stable,
    simulate_var,
    spectral_radius,
)

from oracles import power_iteration_radius


def ar1(phi, d=1, sigma=1.0):
    return VarModel(phi=(phi * np.eye(d),), noise_cov=sigma * np.eye(d))


class TestVarModel:
    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            VarModel(phi=(np.zeros((2, 2)), np.zeros((3, 3))), noise_cov=np.eye(2))

    def test_asymmetric_noise_rejected(self):
        cov = np.array([[1.0, 0.5], [0.2, 1.0]])
        with pytest.raises(ValueError, match="symmetric"):
            VarModel(phi=(np.zeros((2, 2)),), noise_cov=cov)

    def test_indefinite_noise_rejected(self):
        cov = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ValueError, match="eigenvalue"):
            VarModel(phi=(np.zeros((2, 2)),), noise_cov=cov)

    def test_stacked_roundtrip(self):
        rng = np.random.default_rng(0)
        mats = tuple(rng.standard_normal((3, 3)) for _ in range(2))
        m = VarModel(phi=mats, noise_cov=np.eye(3))
        back = VarModel.from_stacked(m.stacked())
        for a, b in zip(m.phi, back.phi):
            np.testing.assert_array_equal(a, b)


class TestBuildRegression:
    def test_scalar_lag_construction(self):
        # d=1, p=1, series (1,2,3,4) -> y=(2,3,4), z=(1,2,3)
        s = SubjectSeries(np.array([[1.0, 2.0, 3.0, 4.0]]))
        form = build_regression(s, 1)
        np.testing.assert_array_equal(form.y, [[2.0, 3.0, 4.0]])
        np.testing.assert_array_equal(form.z, [[1.0, 2.0, 3.0]])

    def test_paper_shapes(self):
        # d=10, T=100, p=1 -> y is 10x99, z is 10x99
        rng = np.random.default_rng(1)
        form = build_regression(SubjectSeries(rng.standard_normal((10, 100))), 1)
        assert form.y.shape == (10, 99)
        assert form.z.shape == (10, 99)

    def test_lag_stacking_matches_scalar_loop(self):
        # d=2, p=2, T=5: expected built by unrolling the recursion by hand
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 5))
        form = build_regression(SubjectSeries(x), 2)
        assert form.y.shape == (2, 3)
        assert form.z.shape == (4, 3)
        for t in range(3):
            np.testing.assert_array_equal(form.y[:, t], x[:, 2 + t])
            np.testing.assert_array_equal(form.z[:2, t], x[:, 1 + t])  # lag 1 on top
            np.testing.assert_array_equal(form.z[2:, t], x[:, t])      # lag 2 below

    def test_noiseless_reconstruction(self):
        rng = np.random.default_rng(3)
        model = VarModel(
            phi=(0.4 * np.eye(3), 0.2 * rng.standard_normal((3, 3)) * 0.1),
            noise_cov=np.zeros((3, 3)),
        )
        series = simulate_var(model, 30, burn_in=5, seed=4,
                              init=rng.standard_normal((3, 2)))
        form = build_regression(series, 2)
        np.testing.assert_allclose(model.stacked() @ form.z, form.y, atol=1e-12)

    def test_too_short_names_minimum(self):
        s = SubjectSeries(np.ones((2, 3)), subject_id="shorty")
        with pytest.raises(ValueError, match=r"at least T=4"):
            build_regression(s, 2)


class TestCompanion:
    def test_p1_returns_phi(self):
        m = ar1(0.5, d=3)
        np.testing.assert_array_equal(companion_matrix(m), m.phi[0])

    def test_scalar_p2(self):
        m = VarModel(phi=(np.array([[0.5]]), np.array([[0.2]])), noise_cov=np.eye(1))
        np.testing.assert_array_equal(companion_matrix(m), [[0.5, 0.2], [1.0, 0.0]])

    def test_eigenvalues_match_polynomial_roots(self):
        # eigenvalues of the companion are the reciprocals of the roots of
        # det(I - phi1 z - phi2 z^2)
        rng = np.random.default_rng(5)
        m = VarModel(
            phi=(0.3 * rng.standard_normal((2, 2)), 0.2 * rng.standard_normal((2, 2))),
            noise_cov=np.eye(2),
        )
        pts = np.linspace(-2.0, 2.0, 5)
        vals = [np.linalg.det(np.eye(2) - m.phi[0] * z - m.phi[1] * z * z) for z in pts]
        coeffs = np.polynomial.polynomial.polyfit(pts, vals, 4)
        roots = np.polynomial.polynomial.polyroots(coeffs)
        mapped = np.sort_complex(1.0 / roots)
        eigs = np.sort_complex(np.linalg.eigvals(companion_matrix(m)))
        np.testing.assert_allclose(mapped, eigs, atol=1e-8)


class TestStability:
    def test_diagonal_cases(self):
        assert is_stable(ar1(0.5, d=10), margin=1.0)
        assert not is_stable(ar1(1.2, d=10), margin=1.0)

    def test_margin_thresholds_with_power_iteration_oracle(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal((6, 6))
        rho = power_iteration_radius(a)
        m = VarModel(phi=(a * (0.97 / rho),), noise_cov=np.eye(6))
        assert abs(spectral_radius(m) - 0.97) < 1e-4
        assert not is_stable(m, margin=0.95)
        assert is_stable(m, margin=1.0)

    def test_invariant_under_orthogonal_conjugation(self):
        rng = np.random.default_rng(7)
        a = 0.8 * rng.standard_normal((5, 5)) / np.sqrt(5)
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        m1 = VarModel(phi=(a,), noise_cov=np.eye(5))
        m2 = VarModel(phi=(q @ a @ q.T,), noise_cov=np.eye(5))
        assert abs(spectral_radius(m1) - spectral_radius(m2)) < 1e-8

    def test_margin_validation(self):
        with pytest.raises(ValueError):
            is_stable(ar1(0.5), margin=0.0)


class TestSimulate:
    def test_zero_dynamics_zero_noise(self):
        m = VarModel(phi=(np.zeros((2, 2)),), noise_cov=np.zeros((2, 2)))
        out = simulate_var(m, 10, burn_in=1, seed=0, init=np.ones((2, 1)))
        np.testing.assert_array_equal(out.data, np.zeros((2, 10)))

    def test_ar1_stationary_variance(self):
        # closed form: var = 1 / (1 - phi^2)
        out = simulate_var(ar1(0.9), 10000, seed=8)
        target = 1.0 / (1.0 - 0.81)
        assert abs(np.var(out.data) - target) / target < 0.10

    def test_deterministic_for_fixed_seed(self):
        m = ar1(0.5, d=3)
        a = simulate_var(m, 50, seed=9)
        b = simulate_var(m, 50, seed=9)
        np.testing.assert_array_equal(a.data, b.data)

    def test_refuses_unstable_and_reports_radius(self):
        with pytest.raises(ValueError, match=r"1\.2"):
            simulate_var(ar1(1.2), 10, seed=0)


class TestFitOls:
    def test_noiseless_recovery(self):
        rng = np.random.default_rng(10)
        phi = 0.5 * rng.standard_normal((3, 3)) / np.sqrt(3)
        m = VarModel(phi=(phi,), noise_cov=np.zeros((3, 3)))
        series = simulate_var(m, 60, burn_in=2, seed=11, init=rng.standard_normal((3, 1)))
        fit = fit_ols(series, 1)
        np.testing.assert_allclose(fit.stacked(), phi, atol=1e-8)

    def test_exact_univariate_ratio(self):
        # y=(2,4,6) on z=(1,2,3) -> phi = 2, via the series (1,2,4,6)... the
        # regression pairs must be exact multiples, so feed them directly
        s = SubjectSeries(np.array([[1.0, 2.0, 4.0, 8.0]]))
        fit = fit_ols(s, 1)
        np.testing.assert_allclose(fit.stacked(), [[2.0]], atol=1e-12)

    def test_consistency_as_t_grows(self):
        rng = np.random.default_rng(12)
        phi = np.zeros((3, 3))
        phi[0, 1] = 0.5
        phi[1, 1] = 0.4
        phi[2, 0] = -0.3
        m = VarModel(phi=(phi,), noise_cov=np.eye(3))
        errs = []
        for t_len in (200, 2000):
            errors = []
            for rep in range(5):
                series = simulate_var(m, t_len, seed=100 + rep)
                errors.append(np.max(np.abs(fit_ols(series, 1).stacked() - phi)))
            errs.append(np.mean(errors))
        assert errs[1] < errs[0]

    def test_rank_deficient_warns_minimum_norm(self):
        # constant series -> design rows are collinear
        x = np.ones((2, 12))
        x[1] = 2.0
        rng = np.random.default_rng(13)
        x = x * rng.uniform(0.5, 1.5, size=(1, 12))  # rank-1 design
        with pytest.warns(RankDeficientDesign):
            fit_ols(SubjectSeries(x), 1)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(14)
        m = VarModel(phi=(0.4 * rng.standard_normal((3, 3)) / np.sqrt(3),),
                     noise_cov=np.eye(3))
        series = simulate_var(m, 150, seed=15)
        base = fit_ols(series, 1).stacked()
        c = 3.7
        scale = np.ones(3)
        scale[1] = c
        scaled = SubjectSeries(series.data * scale[:, None])
        fit = fit_ols(scaled, 1).stacked()
        expected = base * scale[:, None] / scale[None, :]
        np.testing.assert_allclose(fit, expected, atol=1e-8)


class TestCenter:
    def test_means_removed_and_recorded(self):
        rng = np.random.default_rng(16)
        data = MultiSubjectSeries(
            tuple(
                SubjectSeries(rng.standard_normal((3, 40)) + rng.uniform(-2, 2, (3, 1)),
                              subject_id=f"s{i}")
                for i in range(2)
            )
        )
        centered, means = center(data)
        assert means.shape == (2, 3)
        for k, subj in enumerate(centered):
            np.testing.assert_allclose(subj.data.mean(axis=1), 0.0, atol=1e-12)
            np.testing.assert_allclose(
                subj.data + means[k][:, None], data.subjects[k].data, atol=1e-12
            )
