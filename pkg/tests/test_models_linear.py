import numpy as np
import pytest

from bwpipe.models import LinearModel, fit_linear, subgradient_gap


def _soft(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def orthonormal_centered_design(rng, n, p):
    """Orthonormal columns, each orthogonal to the all-ones vector."""
    raw = rng.normal(size=(n, p))
    raw -= raw.mean(axis=0)
    q, _ = np.linalg.qr(raw)
    return q


class TestFitLinear:
    def test_exact_line(self):
        X = np.array([[1.0], [2.0], [3.0]])
        y = np.array([2.0, 4.0, 6.0])
        model = fit_linear(X, y)
        assert np.allclose(model.predict(X), y, atol=1e-8)
        mean, sd = model.standardization
        raw_slope = model.coefficients[0] / sd[0]
        raw_intercept = model.intercept - (model.coefficients * mean / sd).sum()
        assert raw_slope == pytest.approx(2.0, abs=1e-8)
        assert raw_intercept == pytest.approx(0.0, abs=1e-8)

    def test_huge_l1_shrinks_everything(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 5))
        y = rng.normal(size=40)
        model = fit_linear(X, y, l1_penalty=1e9)
        assert np.all(model.coefficients == 0.0)
        assert model.intercept == pytest.approx(float(np.mean(y)))

    def test_ridge_zero_is_ols(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(50, 4))
        y = X @ np.array([1.0, -2.0, 0.5, 3.0]) + rng.normal(0, 0.1, 50)
        model = fit_linear(X, y, l2_penalty=0.0, standardize=False)
        design = np.column_stack([np.ones(50), X])
        ols, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert model.intercept == pytest.approx(ols[0], abs=1e-6)
        assert np.allclose(model.coefficients, ols[1:], atol=1e-6)

    def test_orthonormal_soft_threshold_oracle(self):
        rng = np.random.default_rng(7)
        n, p = 60, 6
        Q = orthonormal_centered_design(rng, n, p)
        y = Q @ rng.normal(0, 3, p) + 5.0 + rng.normal(0, 0.5, n)
        ols = Q.T @ y
        for lam in (0.0, 0.5, 2.0):
            model = fit_linear(Q, y, l1_penalty=lam, standardize=False)
            assert np.allclose(model.coefficients, _soft(ols, lam), atol=1e-8)
            assert model.intercept == pytest.approx(float(np.mean(y)), abs=1e-8)

    def test_elastic_net_orthonormal_closed_form(self):
        rng = np.random.default_rng(9)
        Q = orthonormal_centered_design(rng, 50, 4)
        y = Q @ np.array([4.0, -3.0, 1.0, 0.2]) + rng.normal(0, 0.2, 50)
        ols = Q.T @ y
        l1, l2 = 0.7, 0.3
        model = fit_linear(Q, y, l1_penalty=l1, l2_penalty=l2, standardize=False)
        expected = _soft(ols, l1) / (1.0 + l2)
        assert np.allclose(model.coefficients, expected, atol=1e-8)

    def test_constant_feature_zero_coefficient(self):
        rng = np.random.default_rng(3)
        X = np.column_stack([np.full(30, 7.0), rng.normal(size=30)])
        y = 2.0 * X[:, 1] + rng.normal(0, 0.1, 30)
        model = fit_linear(X, y)
        assert model.coefficients[0] == 0.0

    def test_non_finite_inputs_error(self):
        X = np.array([[1.0], [np.nan]])
        with pytest.raises(ValueError):
            fit_linear(X, np.array([1.0, 2.0]))


class TestSubgradientOptimality:
    @pytest.mark.parametrize("l1,l2", [(0.0, 0.0), (3.0, 0.0), (0.0, 2.0), (1.5, 0.7)])
    def test_random_problems(self, l1, l2):
        rng = np.random.default_rng(42)
        for _ in range(5):
            n, p = 80, 10
            X = rng.normal(size=(n, p))
            beta = np.where(rng.random(p) > 0.5, rng.normal(0, 2, p), 0.0)
            y = X @ beta + rng.normal(0, 0.5, n)
            model = fit_linear(X, y, l1_penalty=l1, l2_penalty=l2)
            gaps = subgradient_gap(model, X, y)
            assert gaps.max() <= 1e-6

    def test_collinear_design(self):
        rng = np.random.default_rng(11)
        base = rng.normal(size=(60, 3))
        X = np.column_stack([base, base[:, 0] + 1e-8 * rng.normal(size=60)])
        y = base @ np.array([1.0, 2.0, -1.0]) + rng.normal(0, 0.1, 60)
        model = fit_linear(X, y, l1_penalty=0.5)
        assert subgradient_gap(model, X, y).max() <= 1e-6


class TestPredict:
    def test_slope_two_at_five(self):
        model = LinearModel(
            intercept=0.0,
            coefficients=np.array([2.0]),
            standardization=(np.zeros(1), np.ones(1)),
        )
        assert model.predict(np.array([[5.0]]))[0] == pytest.approx(10.0)

    def test_dimension_mismatch(self):
        model = LinearModel(
            intercept=0.0,
            coefficients=np.array([2.0, 1.0]),
            standardization=(np.zeros(2), np.ones(2)),
        )
        with pytest.raises(ValueError):
            model.predict(np.ones((3, 3)))
