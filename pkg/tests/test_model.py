import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from cgsde.model import (
    CoefficientField,
    ConditionalEstimate,
    EnsembleTrajectory,
    GaussianMeasure,
    GridDensity2D,
    conditional_y_given_x,
    density_from_function,
    marginal_x,
    normalize_density,
    slow_fast_system,
)
from helpers import gaussian_pdf


def grid(lo, hi, h):
    n = int(round((hi - lo) / h)) + 1
    return np.linspace(lo, hi, n)


def gaussian2d(mean, cov):
    P = np.linalg.inv(cov)
    def fn(X, Y):
        dx, dy = X - mean[0], Y - mean[1]
        return np.exp(-0.5 * (P[0, 0] * dx ** 2 + 2 * P[0, 1] * dx * dy + P[1, 1] * dy ** 2))
    return fn


class TestNormalize:
    def test_uniform(self):
        g = GridDensity2D(x=grid(0, 1, 0.05), y=grid(0, 1, 0.05),
                          values=np.full((21, 21), 2.0))
        out = normalize_density(g)
        assert_allclose(out.values, 1.0, atol=1e-12)
        assert abs(out.mass() - 1.0) < 1e-12

    def test_gaussian_mass_matches_2pi(self):
        # the raw trapezoid mass of exp(-(x^2+y^2)/2) must equal 2*pi
        x = grid(-6, 6, 0.05)
        g = GridDensity2D(x=x, y=x, values=np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / 2))
        assert abs(g.mass() - 2 * np.pi) < 1e-6 * 2 * np.pi
        assert abs(normalize_density(g).mass() - 1.0) < 1e-12

    def test_zero_mass_raises(self):
        g = GridDensity2D(x=grid(0, 1, 0.1), y=grid(0, 1, 0.1),
                          values=np.zeros((11, 11)))
        with pytest.raises(ValueError, match="degenerate density"):
            normalize_density(g)


class TestMarginal:
    def test_product_density(self):
        x = grid(-5, 5, 0.05)
        p = np.exp(-x ** 2 / 2)
        q = np.exp(-(x - 1) ** 2 / 4)
        g = normalize_density(GridDensity2D(x=x, y=x, values=np.outer(p, q)))
        marg = marginal_x(g)
        ref = p / np.trapezoid(p, x)
        assert_allclose(marg.values, ref, atol=1e-10)

    def test_stationary_marginal_is_half_variance(self):
        cov = np.array([[0.5, 0.5], [0.5, 1.0]])
        x = grid(-6, 6, 0.05)
        g = density_from_function(gaussian2d([0, 0], cov), x, x)
        marg = marginal_x(g)
        assert abs(marg.mass() - 1.0) < 1e-10
        assert_allclose(marg.values, gaussian_pdf(x, 0.0, 0.5), atol=1e-4)

    def test_noisy_family_marginal(self):
        eps = 0.5
        cov = np.array([[(1 + 2 * eps) / (1 + eps), eps / (1 + eps)],
                        [eps / (1 + eps), 1.0]])
        x = grid(-8, 8, 0.05)
        g = density_from_function(gaussian2d([0, 0], cov), x, x)
        marg = marginal_x(g)
        assert_allclose(marg.values, gaussian_pdf(x, 0.0, 4.0 / 3.0), atol=1e-4)


class TestConditional:
    def test_product_density_independence(self):
        x = grid(-5, 5, 0.05)
        p = np.exp(-x ** 2 / 2)
        q = np.exp(-(x - 1) ** 2 / 4)
        g = normalize_density(GridDensity2D(x=x, y=x, values=np.outer(p, q)))
        for probe in (-1.0, 0.0, 2.0):
            cond = conditional_y_given_x(g, probe)
            assert_allclose(cond.values, q / np.trapezoid(q, x), atol=1e-10)

    def test_stationary_conditional(self):
        cov = np.array([[0.5, 0.5], [0.5, 1.0]])
        x = grid(-6, 6, 0.05)
        g = density_from_function(gaussian2d([0, 0], cov), x, x)
        cond = conditional_y_given_x(g, 0.3)
        assert abs(np.trapezoid(cond.values, cond.x) - 1.0) < 1e-8
        assert_allclose(cond.values, gaussian_pdf(x, 0.3, 0.5), atol=1e-4)

    def test_vanishing_marginal_raises(self):
        x = grid(-5, 5, 0.1)
        vals = np.zeros((101, 101))
        vals[50, :] = np.exp(-x ** 2)        # mass concentrated at x = 0 only
        g = GridDensity2D(x=x, y=x, values=vals)
        with pytest.raises(ValueError, match="vanishing marginal"):
            conditional_y_given_x(g, 3.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10 ** 6))
    def test_reconstruction_identity(self, seed):
        # conditional * marginal reproduces the joint column (all usable x)
        rng = np.random.default_rng(seed)
        mean = rng.uniform(-1, 1, size=2)
        a = rng.uniform(0.5, 2.0)
        b = rng.uniform(0.5, 2.0)
        c = rng.uniform(-0.5, 0.5) * np.sqrt(a * b)
        x = grid(-7, 7, 0.1)
        g = density_from_function(gaussian2d(mean, np.array([[a, c], [c, b]])), x, x)
        marg = marginal_x(g)
        for ix in range(0, len(x), 17):
            if marg.values[ix] > 1e-8:
                cond = conditional_y_given_x(g, x[ix])
                assert_allclose(cond.values * marg.values[ix], g.values[ix, :],
                                atol=1e-10)


class TestGaussianMeasure:
    def test_symmetrizes_roundoff(self):
        cov = np.array([[1.0, 0.5 + 1e-14], [0.5, 1.0]])
        g = GaussianMeasure(mean=[0, 0], cov=cov)
        assert_allclose(g.cov, g.cov.T, atol=0)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="not symmetric"):
            GaussianMeasure(mean=[0, 0], cov=[[1.0, 0.3], [0.0, 1.0]])

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="not PSD"):
            GaussianMeasure(mean=[0, 0], cov=[[1.0, 2.0], [2.0, 1.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10 ** 6), st.integers(min_value=1, max_value=5))
    def test_psd_after_construction(self, seed, k):
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((k, k))
        g = GaussianMeasure(mean=np.zeros(k), cov=G @ G.T)
        assert np.linalg.eigvalsh(g.cov).min() >= -1e-12 * np.linalg.norm(g.cov)
        assert not g.cov.flags.writeable


class TestEnsembleTrajectory:
    def test_validates_times(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            EnsembleTrajectory(times=[0.0, 0.0, 1.0],
                               states=np.zeros((3, 2, 1)), seed=0)

    def test_rejects_nonfinite(self):
        states = np.zeros((2, 2, 1))
        states[1, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            EnsembleTrajectory(times=[0.0, 1.0], states=states, seed=0)

    def test_at_time(self):
        traj = EnsembleTrajectory(times=[0.0, 1.0, 2.0],
                                  states=np.arange(6.0).reshape(3, 2, 1), seed=0)
        assert_allclose(traj.at_time(1.1)[:, 0], [2.0, 3.0])


class TestCoefficientField:
    def test_shape_check(self):
        f = CoefficientField.from_xy(lambda x, y: y - x, (1,))
        out = f.check(None, np.zeros((4, 1)), np.ones((4, 1)))
        assert out.shape == (4, 1)
        bad = CoefficientField.from_xy(lambda x, y: np.zeros((4, 3)), (1,))
        with pytest.raises(ValueError, match="broadcastable"):
            bad.check(None, np.zeros((4, 1)), np.ones((4, 1)))

    def test_const_diag(self):
        f = CoefficientField.const_diag(2.0, 1)
        assert f.constant_diag == (2.0,)
        assert_allclose(f(None, np.zeros((3, 1)), None), 2.0)

    def test_system_validation(self):
        with pytest.raises(ValueError, match="eps"):
            slow_fast_system(1, 1, lambda x, y: -x, lambda x, y: -y, eps=1.5)
        with pytest.raises(ValueError, match="dimensions"):
            slow_fast_system(0, 1, lambda x, y: -x, lambda x, y: -y)


class TestConditionalEstimate:
    def test_count_invariant(self):
        with pytest.raises(ValueError, match="sum"):
            ConditionalEstimate(
                edges=np.array([0.0, 1.0]), counts=np.array([5]),
                mean_y=np.zeros((1, 1)), var_y=np.zeros((1, 1)),
                se_mean_y=np.zeros((1, 1)), se_var_y=np.zeros((1, 1)),
                min_count=1, n_samples=4,
            )
