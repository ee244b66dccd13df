import numpy as np
import pytest
from numpy.testing import assert_allclose

from cgsde.coarse_grain import (
    GaussianConditional,
    ReducedModel,
    average_coefficients,
    estimate_ecd,
    gyongy_coefficients,
    gyongy_model_from_snapshots,
    matrix_sqrt_psd,
    pooled_variance,
    project_coefficients,
    reduced_table,
    simulate_reduced,
    slow_diffusion_sq,
    weighted_line_fit,
)
from cgsde.integrate import IntegratorConfig, simulate_full
from cgsde.linear_gaussian import gyongy_drift_linear, ou_moments
from cgsde.model import CoefficientField, slow_fast_system
from cgsde.systems import (
    averaged_tracking_model,
    gyongy_tracking_model,
    projected_tracking_model,
    tracking_ecd,
    tracking_linear,
    tracking_system,
)
from helpers import gauss_hermite_expectation

SQRT2 = np.sqrt(2.0)


class TestAverageCoefficients:
    def test_tracking_drift_is_minus_x(self):
        cfg = IntegratorConfig(dt=1e-3, t_final=300.0, seed=6, burn_in=5.0)
        av = average_coefficients(tracking_system(0.25, 0.0),
                                  np.array([[-2.0], [0.0], [1.0]]), cfg)
        for i, x in enumerate([-2.0, 0.0, 1.0]):
            assert abs(av.drift[i, 0] - (-x)) <= 3 * av.drift_se[i, 0]

    def test_y_free_drift_has_zero_variance(self):
        system = slow_fast_system(
            1, 1, lambda x, y: -2.0 * x, lambda x, y: -y,
            beta=CoefficientField.const_diag(SQRT2, 1))
        cfg = IntegratorConfig(dt=1e-2, t_final=10.0, seed=1, burn_in=1.0)
        av = average_coefficients(system, 1.5, cfg)
        assert_allclose(av.drift[0, 0], -3.0, atol=1e-12)
        assert_allclose(av.drift_se[0, 0], 0.0, atol=1e-12)

    def test_quadratic_fast_dependence(self):
        # f = -x + y^2 averaged against N(0,1): oracle E[y^2] by Gauss-Hermite
        system = slow_fast_system(
            1, 1, lambda x, y: -x + y ** 2, lambda x, y: -y,
            beta=CoefficientField.const_diag(SQRT2, 1))
        target = gauss_hermite_expectation(lambda y: y ** 2, 0.0, 1.0)
        cfg = IntegratorConfig(dt=1e-3, t_final=600.0, seed=2, burn_in=5.0)
        av = average_coefficients(system, np.array([[0.5]]), cfg)
        assert abs(av.drift[0, 0] - (-0.5 + target)) <= 3 * av.drift_se[0, 0]


class TestEstimateEcd:
    def test_tracking_eps1_bin_stats(self):
        system = tracking_system(1.0, 0.0)
        cfg = IntegratorConfig(dt=1e-3, t_final=2000.0, seed=31, burn_in=10.0)
        est = estimate_ecd(system, cfg)
        u = est.usable
        assert int(u.sum()) >= 3
        # per-bin conditional mean tracks the bin center, variance is 1/2
        dev_mean = np.abs(est.mean_y[u, 0] - est.centers[u]) / est.se_mean_y[u, 0]
        assert dev_mean.max() <= 3.0
        pv, pse = pooled_variance(est.counts[u], est.var_y[u, 0])
        assert abs(pv - 0.5) <= 3 * pse

    def test_decoupled_system_flat_stats(self):
        system = slow_fast_system(
            1, 1, lambda x, y: -x, lambda x, y: -y,
            alpha=CoefficientField.const_diag(SQRT2, 1),
            beta=CoefficientField.const_diag(SQRT2, 1))
        cfg = IntegratorConfig(dt=1e-3, t_final=1500.0, seed=9, burn_in=10.0)
        est = estimate_ecd(system, cfg)
        u = est.usable
        fit = weighted_line_fit(est.centers[u], est.mean_y[u, 0], est.se_mean_y[u, 0])
        assert abs(fit.slope) <= 3 * fit.se_slope

    def test_noisy_family_slope(self):
        eps = 0.5
        system = tracking_system(eps, SQRT2)
        cfg = IntegratorConfig(dt=1e-3, t_final=1500.0, seed=23, burn_in=10.0)
        est = estimate_ecd(system, cfg)
        u = est.usable
        fit = weighted_line_fit(est.centers[u], est.mean_y[u, 0], est.se_mean_y[u, 0])
        assert abs(fit.slope - eps / (1 + 2 * eps)) <= 3 * fit.se_slope

    def test_insufficient_coverage_raises(self):
        system = tracking_system(1.0, 0.0)
        cfg = IntegratorConfig(dt=1e-2, t_final=60.0, seed=2, burn_in=1.0)
        with pytest.raises(ValueError, match="insufficient coverage"):
            estimate_ecd(system, cfg, sample_spacing=0.5, min_count=100)


class TestProjectCoefficients:
    def test_monte_carlo_route_near_zero(self):
        system = tracking_system(1.0, 0.0)
        cfg = IntegratorConfig(dt=1e-3, t_final=2000.0, seed=31, burn_in=10.0)
        est = estimate_ecd(system, cfg)
        for x in est.centers[est.usable][::5]:
            pc = project_coefficients(est, float(x))
            assert abs(pc.drift[0]) <= 3 * pc.drift_se[0]
            assert_allclose(pc.diffusion_sq, 0.0, atol=1e-12)

    def test_unusable_bin_hint(self):
        system = tracking_system(1.0, 0.0)
        cfg = IntegratorConfig(dt=1e-3, t_final=2000.0, seed=31, burn_in=10.0)
        est = estimate_ecd(system, cfg)
        far = float(est.edges[0] - 1.0)
        with pytest.raises(ValueError, match="nearest usable bin"):
            project_coefficients(est, far)

    def test_analytic_route_noisy_family(self):
        eps = 0.5
        slope, var = tracking_ecd(eps, SQRT2)
        cond = GaussianConditional(mean=lambda x: np.array([slope * x]),
                                   cov=lambda x: np.array([[var]]))
        drift = lambda xs, ys: ys - xs
        diff_sq = lambda xs, ys: np.broadcast_to(2.0, (xs.shape[0], 1, 1))
        for x in (-2.0, 0.3, 1.0):
            pc = project_coefficients(cond, x, drift=drift, diffusion_sq=diff_sq)
            assert_allclose(pc.drift[0], -x * (1 - eps / (1 + 2 * eps)), atol=1e-12)
            assert_allclose(pc.diffusion_sq, [[2.0]], atol=1e-12)

    def test_gradient_mean_force_identity(self):
        # V = x^2/2 + (y-x)^2/2: conditional is N(x, 1), so the projected
        # drift of the gradient system equals -x (quadrature oracle)
        cond = GaussianConditional(mean=lambda x: np.array([x]),
                                   cov=lambda x: np.array([[1.0]]))
        drift = lambda xs, ys: -(2.0 * xs - ys)      # -dV/dx
        diff_sq = lambda xs, ys: np.broadcast_to(2.0, (xs.shape[0], 1, 1))
        for x in (-1.5, 0.0, 2.0):
            pc = project_coefficients(cond, x, drift=drift, diffusion_sq=diff_sq)
            oracle = gauss_hermite_expectation(lambda y: -(2 * x - y), x, 1.0)
            assert_allclose(pc.drift[0], oracle, atol=1e-10)
            assert_allclose(pc.drift[0], -x, atol=1e-10)


class TestGyongyCoefficients:
    def _ensemble(self, seed, t_final, n, stride):
        system = tracking_system(1.0, 0.0)
        m0 = np.array([-1.0, 5.0])
        s0 = np.diag([0.1, 1.0])

        def init(rng, k):
            return m0 + rng.standard_normal((k, 2)) * np.sqrt(np.diag(s0))

        cfg = IntegratorConfig(dt=1e-3, t_final=t_final, n_particles=n,
                               seed=seed, store_stride=stride)
        return system, m0, s0, simulate_full(system, init, cfg, n_threads=2)

    def test_matches_closed_form_drift(self):
        system, m0, s0, traj = self._ensemble(42, 1.0, 100_000, 1000)
        est = gyongy_coefficients(system, 1.0, traj).estimate
        sel = est.counts >= 200
        fd = est.fields["drift"]
        exact = gyongy_drift_linear(1.0, est.centers, m0, s0)
        dev = np.abs(fd.mean[:, 0] - exact) / fd.se[:, 0]
        assert int(sel.sum()) >= 20
        assert float(dev[sel].max()) <= 3.0

    def test_y_free_drift_exact(self):
        system = slow_fast_system(
            1, 1, lambda x, y: -3.0 * x, lambda x, y: -y,
            alpha=CoefficientField.const_diag(1.0, 1),
            beta=CoefficientField.const_diag(SQRT2, 1))
        rng = np.random.default_rng(0)
        states = np.column_stack([rng.standard_normal(5000), rng.standard_normal(5000)])
        est = gyongy_coefficients(system, 0.5, states).estimate
        u = est.usable
        fd = est.fields["drift"]
        assert_allclose(fd.mean[u, 0], -3.0 * est.centers[u], atol=1e-12)
        assert_allclose(fd.se[u, 0], 0.0, atol=1e-12)

    def test_long_time_convergence_to_projection(self):
        # at t = 20 the binned drift agrees with the projected drift (zero)
        system = tracking_system(1.0, 0.0)
        cfg = IntegratorConfig(dt=1e-3, t_final=20.0, n_particles=30_000,
                               seed=23, store_stride=20_000)
        traj = simulate_full(system, np.zeros(2), cfg, n_threads=2)
        est = gyongy_coefficients(system, 20.0, traj).estimate
        u = est.usable
        fd = est.fields["drift"]
        assert float(np.abs(fd.mean[u, 0] / fd.se[u, 0]).max()) <= 3.0


class TestMatrixSqrt:
    def test_identity(self):
        assert_allclose(matrix_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-14)

    def test_diagonal(self):
        assert_allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]),
                        atol=1e-13)

    def test_random_psd_roundtrip(self):
        rng = np.random.default_rng(7)
        G = rng.standard_normal((3, 3))
        M = G @ G.T
        R = matrix_sqrt_psd(M)
        assert_allclose(R @ R, M, atol=1e-10 * np.linalg.norm(M))
        assert_allclose(R, R.T, atol=1e-12)

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="not PSD"):
            matrix_sqrt_psd(np.diag([1.0, -0.5]))


class TestSimulateReduced:
    def test_projected_tracking_paths_constant(self):
        model = projected_tracking_model(1.0, 0.0)
        cfg = IntegratorConfig(dt=1e-2, t_final=5.0, n_particles=10, seed=3)
        traj = simulate_reduced(model, np.linspace(-1, 1, 10)[:, None], cfg)
        assert_allclose(traj.states, np.broadcast_to(traj.states[0], traj.states.shape))

    def test_averaged_tracking_exponential_decay(self):
        model = averaged_tracking_model(0.0)
        cfg = IntegratorConfig(dt=0.05, t_final=3.0, n_particles=1, seed=0)
        traj = simulate_reduced(model, 1.0, cfg)
        assert_allclose(traj.states[:, 0, 0], np.exp(-traj.times), atol=1e-8)

    def test_gyongy_tracking_matches_exact_moments(self):
        m0 = np.array([-1.0, 5.0])
        s0 = np.diag([0.1, 1.0])
        model = gyongy_tracking_model(m0, s0)
        n = 30_000
        cfg = IntegratorConfig(dt=0.25, t_final=20.0, n_particles=n, seed=19)

        def init(rng, k):
            return (m0[0] + np.sqrt(s0[0, 0]) * rng.standard_normal(k))[:, None]

        traj = simulate_reduced(model, init, cfg)
        lin = tracking_linear(1.0, 0.0)
        for t in (1.0, 5.0, 20.0):
            g = ou_moments(lin, m0, s0, t)
            xs = traj.at_time(t)[:, 0]
            se_m = np.sqrt(g.cov[0, 0] / n)
            se_v = g.cov[0, 0] * np.sqrt(2.0 / (n - 1))
            assert abs(xs.mean() - g.mean[0]) <= 3 * se_m
            assert abs(xs.var(ddof=1) - g.cov[0, 0]) <= 3 * se_v

    def test_projection_stationarity_noisy_family(self):
        # long-run law of the projected reduction matches the x-marginal N(0, 4/3)
        eps = 0.5
        model = projected_tracking_model(eps, SQRT2)
        n = 4000
        cfg = IntegratorConfig(dt=1e-3, t_final=20.0, n_particles=n, seed=27,
                               store_stride=20_000)
        xs = simulate_reduced(model, 0.0, cfg).states[-1, :, 0]
        target = (1 + 2 * eps) / (1 + eps)
        se_m = np.sqrt(target / n)
        se_v = target * np.sqrt(2.0 / (n - 1))
        assert abs(xs.mean()) <= 3 * se_m
        assert abs(xs.var(ddof=1) - target) <= 3 * se_v + 2e-3  # + O(dt) EM bias

    def test_counterexample_separation(self):
        # deterministic start: projected variance stays 0, truth tends to 1/2
        model = projected_tracking_model(1.0, 0.0)
        cfg = IntegratorConfig(dt=0.1, t_final=20.0, n_particles=100, seed=4)
        traj = simulate_reduced(model, -1.0, cfg)
        assert float(traj.states.var(axis=1).max()) == 0.0
        lin = tracking_linear(1.0, 0.0)
        truth = ou_moments(lin, [-1.0, 0.0], np.zeros((2, 2)), 20.0)
        assert abs(truth.cov[0, 0] - 0.5) < 1e-8
        # the artifact must surface the discrepancy, not hide it
        assert truth.cov[0, 0] - float(traj.states[-1].var()) > 0.4

    def test_gyongy_time_domain_enforced(self):
        snaps = self._snapshots()
        model = gyongy_model_from_snapshots(snaps, t_end=1.0, zero_diffusion=True)
        cfg = IntegratorConfig(dt=0.1, t_final=2.0, n_particles=2, seed=0)
        with pytest.raises(ValueError, match="time domain"):
            simulate_reduced(model, 0.0, cfg)

    @staticmethod
    def _snapshots():
        system = tracking_system(1.0, 0.0)
        m0 = np.array([-1.0, 5.0])
        s0 = np.diag([0.1, 1.0])

        def init(rng, k):
            return m0 + rng.standard_normal((k, 2)) * np.sqrt(np.diag(s0))

        cfg = IntegratorConfig(dt=1e-3, t_final=1.0, n_particles=20_000,
                               seed=50, store_stride=500)
        traj = simulate_full(system, init, cfg)
        return [gyongy_coefficients(system, t, traj) for t in (0.5, 1.0)]

    def test_monte_carlo_model_roundtrip(self):
        snaps = self._snapshots()
        model = gyongy_model_from_snapshots(snaps, zero_diffusion=True)
        cfg = IntegratorConfig(dt=1e-2, t_final=1.0, n_particles=8, seed=1)
        traj = simulate_reduced(model, -1.0, cfg)
        assert np.isfinite(traj.states).all()
        header, rows = reduced_table(model)
        assert header[0] == "t" and len(rows) == 2 * len(snaps[0].estimate.counts)


class TestGradientCoincidence:
    def test_projection_equals_averaging_for_gradient_system(self):
        # V = x^2/2 + (y-x)^2/2, reversible: ECD equals the frozen law,
        # so the two Monte Carlo reductions must agree within errors
        system = slow_fast_system(
            1, 1,
            lambda x, y: -(2.0 * x - y),
            lambda x, y: -(y - x),
            alpha=CoefficientField.const_diag(SQRT2, 1),
            beta=CoefficientField.const_diag(SQRT2, 1))
        cfg = IntegratorConfig(dt=1e-3, t_final=1500.0, seed=41, burn_in=10.0)
        est = estimate_ecd(system, cfg)
        u = est.usable
        probes = est.centers[u][np.abs(est.centers[u]) < 1.5][::4]
        avg_cfg = IntegratorConfig(dt=1e-3, t_final=300.0,
                                   n_particles=len(probes), seed=8, burn_in=5.0)
        av = average_coefficients(system, probes[:, None], avg_cfg)
        for i, x in enumerate(probes):
            pc = project_coefficients(est, float(x))
            comb = np.hypot(pc.drift_se[0], av.drift_se[i, 0])
            assert abs(pc.drift[0] - av.drift[i, 0]) <= 3 * comb


class TestReducedModelValidation:
    def test_kind_checked(self):
        with pytest.raises(ValueError, match="kind"):
            ReducedModel(kind="other", d=1, drift=lambda t, x: -x, diffusion_sq=None)

    def test_gyongy_needs_domain(self):
        with pytest.raises(ValueError, match="time domain"):
            ReducedModel(kind="gyongy", d=1, drift=lambda t, x: -x, diffusion_sq=None)

    def test_diffusion_psd_where_defined(self):
        model = projected_tracking_model(0.5, SQRT2)
        vals = model.diffusion_sq(0.0, np.linspace(-2, 2, 5)[:, None])
        assert np.all(np.linalg.eigvalsh(vals) >= 0)
