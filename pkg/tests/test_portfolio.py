from __future__ import annotations

import warnings

import numpy as np
import pytest
from oracles import DqBatch, OmegaBatch, grid_minimise

from dqex.dq import dq_ex
from dqex.optimize import (
    KinkWarning,
    OptimizeError,
    dq_ex_gradient,
    dq_objective,
    max_omega_lp,
    min_dq_ex_frontier,
    min_dq_ex_gradient_descent,
    min_dq_ex_lp,
    project_simplex,
    pseudo_convexity_probe,
)
from dqex.risk_core import omega_ratio


def gaussian(rng, N, n):
    A = rng.standard_normal((n, n)) * 0.5 + np.eye(n)
    return rng.standard_normal((N, n)) @ A + rng.normal(0, 0.1, n)


class TestHelpers:
    def test_project_simplex(self, rng):
        for _ in range(50):
            v = rng.normal(size=5) * 3
            p = project_simplex(v)
            assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)
            # the projection is the closest simplex point among random competitors
            others = rng.dirichlet(np.ones(5), size=200)
            assert np.linalg.norm(v - p) <= np.linalg.norm(v - others, axis=1).min() + 1e-12

    def test_objective_is_dq_of_weighted_sample(self, rng):
        X = gaussian(rng, 120, 3)
        w = np.array([0.2, 0.5, 0.3])
        assert dq_objective(X, 0.1, w) == pytest.approx(dq_ex(X * w, 0.1), abs=1e-10)
        assert dq_objective(X, 0.1, 7 * w) == pytest.approx(dq_objective(X, 0.1, w), abs=1e-10)


class TestMinDqLp:
    def test_hedge(self, rng):
        x = rng.standard_normal(80)
        res = min_dq_ex_lp(np.c_[x, -x], 0.1)
        np.testing.assert_allclose(res.weights, [0.5, 0.5], atol=1e-9)
        assert res.objective == pytest.approx(0.0, abs=1e-12)
        assert res.dq == pytest.approx(0.0, abs=1e-12)

    def test_duplicated_column(self, rng):
        x = rng.standard_normal(60)
        res = min_dq_ex_lp(np.c_[x, x], 0.1)
        assert res.dq == pytest.approx(1.0, abs=1e-9)
        assert res.weights.sum() == pytest.approx(1.0) and np.all(res.weights >= 0)

    def test_constant_column_excluded(self, rng):
        X = np.c_[gaussian(rng, 50, 2), np.full(50, 3.0)]
        with pytest.warns(UserWarning, match="excluding"):
            res = min_dq_ex_lp(X, 0.1)
        assert res.excluded == [2] and res.weights[2] == 0.0

    def test_all_columns_degenerate(self):
        with pytest.raises(OptimizeError):
            min_dq_ex_lp(np.ones((10, 2)), 0.1)

    def test_matches_grid_oracle(self, rng):
        for N, n in ((50, 3), (80, 2), (60, 4)):
            X = gaussian(rng, N, n)
            res = min_dq_ex_lp(X, 0.1)
            f = DqBatch(X, 0.1)
            best, _ = grid_minimise(f, n, planes=f.D)
            assert res.dq == pytest.approx(best, abs=1e-6)
            # the reported value is the DQ of the weighted sample
            assert res.dq == pytest.approx(dq_ex(X * res.weights, 0.1), abs=1e-10)

    def test_tiny_big_m_is_doubled(self, rng):
        X = gaussian(rng, 40, 3)
        ref = min_dq_ex_lp(X, 0.1)
        res = min_dq_ex_lp(X, 0.1, M=ref.big_m / 1e6)
        assert res.big_m > ref.big_m / 1e6
        assert res.dq == pytest.approx(ref.dq, abs=1e-9)

    def test_deterministic(self, rng):
        X = gaussian(rng, 100, 4)
        a, b = min_dq_ex_lp(X, 0.1), min_dq_ex_lp(X, 0.1)
        np.testing.assert_array_equal(a.weights, b.weights)


class TestFrontier:
    def test_hedge_reaches_zero(self, rng):
        x = rng.standard_normal(50)
        res = min_dq_ex_frontier(np.c_[x, -x], 0.1)
        assert res.dq == pytest.approx(0.0, abs=1e-10)

    def test_single_asset_ratio_constant(self, rng):
        x = rng.standard_normal(40)
        res = min_dq_ex_frontier(x[:, None], 0.1)
        assert len(res.frontier) == 1
        assert res.dq == pytest.approx(1.0, abs=1e-12)

    def test_matches_lp(self, rng):
        for _ in range(5):
            X = gaussian(rng, 100, 3)
            lp = min_dq_ex_lp(X, 0.1)
            fr = min_dq_ex_frontier(X, 0.1)
            assert fr.dq == pytest.approx(lp.dq, abs=1e-6)
            assert len(fr.frontier) == 40
            ups = [pt.upside for pt in fr.frontier]
            ms = [pt.m for pt in fr.frontier]
            assert np.all(np.diff(ms) > 0) and min(ups) >= 0.0

    def test_grid_outside_range(self, rng):
        X = gaussian(rng, 30, 2)
        with pytest.raises(OptimizeError):
            min_dq_ex_frontier(X, 0.1, m_grid=[1e6])
        with pytest.raises(OptimizeError):
            min_dq_ex_frontier(X, 0.1, m_grid=[])


class TestOmega:
    def test_dominant_asset(self, rng):
        r2 = rng.normal(0.0, 0.01, 200)
        r1 = r2 + 0.002
        res = max_omega_lp(-np.c_[r1, r2], 0.01)
        np.testing.assert_allclose(res.weights, [1.0, 0.0], atol=1e-12)

    def test_identical_assets(self, rng):
        r = rng.normal(0.001, 0.01, 150)
        res = max_omega_lp(-np.c_[r, r], 0.0)
        assert res.omega == pytest.approx(omega_ratio(r, 0.0), abs=1e-9)

    def test_matches_grid_oracle(self, rng):
        for _ in range(3):
            R = rng.normal(0.0005, 0.01, (50, 3)) + rng.normal(0, 0.001, 3)
            t0 = float(R.mean())
            res = max_omega_lp(-R, t0)
            best, _ = grid_minimise(OmegaBatch(-R, t0), 3)
            assert res.omega == pytest.approx(-best, abs=1e-6)
            assert res.omega == pytest.approx(omega_ratio(R @ res.weights, t0), abs=1e-12)

    def test_no_downside_anywhere(self):
        with pytest.raises(OptimizeError):
            max_omega_lp(-np.ones((5, 2)), 0.0)

    def test_unbounded_ratio(self):
        R = np.array([[0.02, -0.01], [0.01, 0.02], [0.03, -0.02]])
        res = max_omega_lp(-R, 0.0)
        assert res.status == "unbounded_ratio"
        np.testing.assert_allclose(res.weights, [1.0, 0.0])


class TestGradient:
    def test_finite_differences(self, rng):
        X = gaussian(rng, 200, 4)
        for _ in range(10):
            w = rng.dirichlet(np.ones(4))
            g = dq_ex_gradient(X, 0.1, w)
            h = 1e-6
            fd = np.array(
                [(dq_objective(X, 0.1, w + h * e) - dq_objective(X, 0.1, w - h * e)) / (2 * h) for e in np.eye(4)]
            )
            np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-8)
            assert abs(g @ w) <= 1e-8 * np.linalg.norm(g) * np.linalg.norm(w) + 1e-15

    def test_comonotonic_gradient_vanishes(self, rng):
        x = rng.standard_normal(50)
        g = dq_ex_gradient(np.c_[x, x], 0.1, [0.3, 0.7])
        np.testing.assert_allclose(g, 0.0, atol=1e-12)

    def test_kink_warning(self):
        # the 0.2-expectile of (-4, 0, 1) is exactly 0, so the middle row sits on the kink
        x = np.array([-4.0, 0.0, 1.0])
        with pytest.warns(KinkWarning):
            dq_ex_gradient(np.c_[x, 2 * x], 0.2, [0.5, 0.5])

    def test_requires_positive_weights(self, rng):
        with pytest.raises(OptimizeError):
            dq_ex_gradient(gaussian(rng, 20, 2), 0.1, [1.0, 0.0])


class TestGradientDescent:
    def test_hedge_from_skewed_start(self, rng):
        x = rng.standard_normal(100)
        res = min_dq_ex_gradient_descent(np.c_[x, -x], 0.1, start=[0.9, 0.1])
        assert res.objective == pytest.approx(0.0, abs=1e-8)

    def test_duplicated_pair_stays_one(self, rng):
        x = rng.standard_normal(60)
        res = min_dq_ex_gradient_descent(np.c_[x, x], 0.1)
        assert res.objective == pytest.approx(1.0, abs=1e-12)

    def test_matches_lp(self, rng):
        for _ in range(5):
            X = gaussian(rng, 150, 3)
            lp = min_dq_ex_lp(X, 0.1)
            gd = min_dq_ex_gradient_descent(X, 0.1)
            assert gd.objective == pytest.approx(lp.dq, abs=1e-4)
            assert gd.objective >= lp.dq - 1e-9

    def test_bad_start(self, rng):
        with pytest.raises(OptimizeError):
            min_dq_ex_gradient_descent(gaussian(rng, 20, 2), 0.1, start=[1.0, 0.0])


class TestProbe:
    def test_same_point(self, rng):
        X = gaussian(rng, 80, 3)
        w = np.array([0.2, 0.3, 0.5])
        rec = pseudo_convexity_probe(X, 0.1, w, w)
        assert rec.directional == 0.0 and rec.f_w == rec.f_v

    def test_descent_direction(self, rng):
        X = gaussian(rng, 80, 3)
        with warnings.catch_warnings():
            warnings.simplefilter("error", KinkWarning)
            for _ in range(100):
                w, v = rng.dirichlet(np.ones(3), size=2)
                rec = pseudo_convexity_probe(X, 0.1, w, v)
                if rec.f_v < rec.f_w:
                    assert rec.directional < 0
