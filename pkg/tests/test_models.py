from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.optimize import brentq

from dqex.dq import dq_ex
from dqex.models import (
    NORMAL,
    BernoulliSpec,
    EllipticalSpec,
    EquicorrelatedNormal,
    Generator,
    IidPareto,
    IidT,
    ModelError,
    MrvSpec,
    MultivariateT,
    bernoulli_oracle,
    comonotonic_spectrum,
    coordinate_spectrum,
    elliptical_dq_ex,
    elliptical_dr,
    elliptical_optimal_weights,
    equicorrelated,
    k_sigma,
    mrv_limit_dq,
    qp_kkt_residual,
    sample_model,
    standard_expectile,
    student_t,
)


def upper_partial_quad(dist, c):
    val, _ = integrate.quad(lambda y: (y - c) * dist.pdf(y), c, np.inf, epsabs=1e-13, epsrel=1e-12)
    return val


def expectile_quad(dist, a):
    def foc(c):
        up = upper_partial_quad(dist, c)
        return (1 - a) * up - a * (up + c)

    return brentq(foc, -20, 20, xtol=1e-13)


class TestGenerators:
    @pytest.mark.parametrize("c", [-3.0, -0.5, 0.0, 0.7, 2.5, 6.0])
    def test_normal_partial_expectation(self, c):
        assert NORMAL.upper_partial(c) == pytest.approx(upper_partial_quad(stats.norm, c), rel=1e-9, abs=1e-15)

    @pytest.mark.parametrize("c", [-2.0, 0.0, 1.3, 4.0])
    def test_student_partial_expectation(self, c):
        g = student_t(5)
        assert g.upper_partial(c) == pytest.approx(upper_partial_quad(stats.t(5), c), rel=1e-8)

    def test_deep_tail_positive(self):
        assert 0.0 < NORMAL.upper_partial(30.0) < 1e-190

    @pytest.mark.parametrize("a", [0.01, 0.05, 0.2, 0.45])
    def test_standard_expectile_against_quadrature(self, a):
        assert standard_expectile(NORMAL, a) == pytest.approx(expectile_quad(stats.norm, a), abs=1e-9)
        assert standard_expectile(student_t(4), a) == pytest.approx(expectile_quad(stats.t(4), a), abs=1e-8)

    def test_invalid_generators(self):
        with pytest.raises(ModelError):
            student_t(1.0)
        with pytest.raises(ModelError):
            Generator("laplace")


class TestElliptical:
    def test_k_sigma(self):
        assert k_sigma(np.eye(4)) == pytest.approx(2.0)
        assert k_sigma(np.ones((3, 3))) == 1.0
        with pytest.raises(ModelError):
            k_sigma(np.array([[1.0, -1.0], [-1.0, 1.0]]))

    def test_dq_against_monte_carlo(self):
        rng = np.random.default_rng(7)
        sigma = equicorrelated(3, 0.3)
        X = rng.multivariate_normal(np.zeros(3), sigma, size=200_000)
        exact = elliptical_dq_ex(EllipticalSpec(None, sigma), 0.1)
        assert dq_ex(X, 0.1) == pytest.approx(exact, rel=0.03)

    def test_location_does_not_matter(self):
        s = equicorrelated(4, 0.2)
        assert elliptical_dq_ex(EllipticalSpec(np.arange(4.0), s), 0.05) == elliptical_dq_ex(EllipticalSpec(None, s), 0.05)

    def test_comonotonic_is_one(self):
        sigma = np.outer([1.0, 2.0, 0.5], [1.0, 2.0, 0.5])
        assert elliptical_dq_ex(EllipticalSpec(None, sigma), 0.05) == 1.0

    def test_decreasing_in_k(self):
        vals = [elliptical_dq_ex(EllipticalSpec(None, equicorrelated(5, r)), 0.05) for r in (0.8, 0.4, 0.0)]
        assert vals[0] > vals[1] > vals[2]

    def test_student_generator(self):
        spec = EllipticalSpec(None, np.eye(3), student_t(4))
        rng = np.random.default_rng(11)
        X = stats.multivariate_t(np.zeros(3), np.eye(3), df=4).rvs(size=200_000, random_state=rng)
        assert dq_ex(X, 0.1) == pytest.approx(elliptical_dq_ex(spec, 0.1), rel=0.05)

    def test_dr(self):
        assert elliptical_dr(EllipticalSpec(None, np.eye(4))) == pytest.approx(0.5)
        with pytest.raises(ModelError):
            elliptical_dr(EllipticalSpec(np.ones(4), np.eye(4)))

    def test_validation(self):
        with pytest.raises(ModelError):
            EllipticalSpec(None, np.zeros((2, 2)))
        with pytest.raises(ModelError):
            EllipticalSpec(None, np.array([[1.0, 0.2], [0.1, 1.0]]))
        with pytest.raises(ModelError):
            EllipticalSpec(np.zeros(3), np.eye(2))


class TestOptimalWeights:
    def test_diagonal_example(self):
        w = elliptical_optimal_weights(EllipticalSpec(None, np.diag([1.0, 4.0])))
        np.testing.assert_allclose(w, [2 / 3, 1 / 3], atol=1e-10)

    def test_kkt_and_grid(self, rng):
        for _ in range(10):
            A = rng.standard_normal((3, 3))
            sigma = A @ A.T + 0.1 * np.eye(3)
            w = elliptical_optimal_weights(EllipticalSpec(None, sigma))
            assert qp_kkt_residual(sigma, w) <= 1e-8
            assert abs(w.sum() - 1) <= 1e-12 and np.all(w >= 0)
            s = np.sqrt(np.diag(sigma))
            ratio = lambda v: (v @ s) / np.sqrt(v @ sigma @ v)  # noqa: E731
            grid = np.array([[i, j, 200 - i - j] for i in range(201) for j in range(201 - i)]) / 200
            best = max(ratio(v) for v in grid)
            assert ratio(w) >= best - 1e-12

    def test_zero_scale_asset_excluded(self):
        sigma = np.diag([1.0, 0.0, 4.0])
        w = elliptical_optimal_weights(EllipticalSpec(None, sigma))
        np.testing.assert_allclose(w, [2 / 3, 0.0, 1 / 3], atol=1e-10)


class TestMrv:
    @pytest.mark.parametrize("n,gamma", [(10, 3.0), (5, 3.0), (2, 1.5), (7, 4.0)])
    def test_iid_limit(self, n, gamma):
        assert mrv_limit_dq(coordinate_spectrum(n, gamma)) == pytest.approx(n ** (1 - gamma), rel=1e-12)

    def test_comonotonic_limit(self):
        assert mrv_limit_dq(comonotonic_spectrum(4, 2.5)) == pytest.approx(1.0, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ModelError):
            MrvSpec(0.5, np.eye(2), [0.5, 0.5])
        with pytest.raises(ModelError):
            MrvSpec(2.0, np.ones((1, 2)), [1.0])
        with pytest.raises(ModelError):
            mrv_limit_dq(MrvSpec(2.0, -np.eye(2), [0.5, 0.5]))


class TestBernoulliOracle:
    def test_general_p_has_no_var_branch(self):
        o = bernoulli_oracle(BernoulliSpec(0.2), 0.05)
        assert o.alpha_star_var is None and o.alpha_star_es is None
        with pytest.raises(ModelError):
            bernoulli_oracle(BernoulliSpec(0.1, n=3), 0.05)

    def test_es_branches(self):
        assert bernoulli_oracle(BernoulliSpec(0.1), 0.05).alpha_star_es == 0.0
        assert bernoulli_oracle(BernoulliSpec(0.1), 0.15).alpha_star_es == pytest.approx(0.03)
        assert bernoulli_oracle(BernoulliSpec(0.1), 0.3).alpha_star_es == 0.3


class TestSamplers:
    def test_determinism(self):
        a = sample_model(EquicorrelatedNormal(3, 0.5), 100, seed=3).observations
        b = sample_model(EquicorrelatedNormal(3, 0.5), 100, seed=3).observations
        np.testing.assert_array_equal(a, b)

    def test_equicorrelated_moments(self):
        X = sample_model(EquicorrelatedNormal(4, 0.6), 200_000, seed=1).observations
        C = np.corrcoef(X.T)
        assert np.abs(C[np.triu_indices(4, 1)] - 0.6).max() < 0.01
        X = sample_model(EquicorrelatedNormal(3, 1.0), 10, seed=1).observations
        np.testing.assert_allclose(X[:, 0], X[:, 2])

    def test_multivariate_t_variance(self):
        X = sample_model(MultivariateT(6.0, tuple(map(tuple, np.eye(2)))), 400_000, seed=2).observations
        np.testing.assert_allclose(X.var(axis=0), 6.0 / 4.0, rtol=0.03)

    def test_pareto_tail(self):
        X = sample_model(IidPareto(3.0, 2), 1_000_000, seed=4).observations
        assert X.min() >= 1.0
        assert np.mean(X[:, 0] > 10.0) == pytest.approx(1e-3, rel=0.1)

    def test_iid_t_shape_and_validation(self):
        assert sample_model(IidT(3.0, 5), 17, seed=0).observations.shape == (17, 5)
        with pytest.raises(ModelError):
            sample_model(EquicorrelatedNormal(3, -0.6), 10)
        with pytest.raises(ModelError):
            sample_model(IidPareto(0.5, 2), 10)
        with pytest.raises(ModelError):
            sample_model(IidT(3.0, 2), 0)
