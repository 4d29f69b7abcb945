import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwpipe.models import GbrParams, fit_gbr, grow_tree


class TestGrowTree:
    def test_prediction_matches_scalar_traversal(self):
        rng = np.random.default_rng(0)
        checked = 0
        while checked < 1000:
            n, p = 60, int(rng.integers(1, 6))
            X = rng.normal(size=(n, p))
            y = rng.normal(size=n)
            tree = grow_tree(X, y, max_depth=int(rng.integers(1, 5)), min_leaf=1)
            fast = tree.predict(X)
            for r in range(min(n, 25)):
                assert fast[r] == tree.predict_row(X[r])
                checked += 1

    def test_min_leaf_respected(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 3))
        y = rng.normal(size=100)
        for min_leaf in (1, 5, 20):
            tree = grow_tree(X, y, max_depth=6, min_leaf=min_leaf)
            leaf_cover = tree.cover[tree.feature < 0]
            assert leaf_cover.min() >= min_leaf

    def test_pure_node_stops(self):
        X = np.zeros((20, 2))
        y = np.arange(20.0)
        tree = grow_tree(X, y, max_depth=3, min_leaf=1)
        assert tree.n_nodes == 1  # no valid split on constant features

    def test_root_value_is_mean(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        tree = grow_tree(X, y, max_depth=2, min_leaf=5)
        assert tree.value[0] == pytest.approx(float(np.mean(y)))


class TestFitGbr:
    def test_zero_iterations_constant_mean(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = fit_gbr(X, y, GbrParams(n_iterations=0))
        assert np.allclose(model.predict(X), np.mean(y))
        # training R^2 of the constant predictor is 0 by definition
        ss_res = np.sum((y - model.predict(X)) ** 2)
        ss_tot = np.sum((y - y.mean()) ** 2)
        assert 1 - ss_res / ss_tot == pytest.approx(0.0, abs=1e-12)

    def test_step_function_learned_exactly(self):
        rng = np.random.default_rng(42)
        X = rng.uniform(-1, 1, size=(400, 1))
        y = (X[:, 0] > 0).astype(float)
        model = fit_gbr(
            X, y, GbrParams(n_iterations=200, max_depth=1, learning_rate=0.5, min_leaf=1)
        )
        rmse = float(np.sqrt(np.mean((model.predict(X) - y) ** 2)))
        assert rmse < 1e-3

    def test_loss_non_increasing_seeded_corpus(self):
        rng = np.random.default_rng(7)
        for trial in range(8):
            n = int(rng.integers(20, 120))
            p = int(rng.integers(1, 6))
            X = rng.normal(size=(n, p))
            y = rng.normal(size=n) + X[:, 0] * rng.normal()
            model = fit_gbr(
                X,
                y,
                GbrParams(
                    n_iterations=40,
                    max_depth=int(rng.integers(1, 4)),
                    learning_rate=float(rng.uniform(0.05, 1.0)),
                    min_leaf=int(rng.integers(1, 6)),
                    seed=trial,
                ),
            )
            assert np.all(np.diff(model.train_loss) <= 1e-10)

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        lr=st.floats(0.05, 1.0),
        depth=st.integers(1, 4),
    )
    def test_loss_non_increasing_property(self, seed, lr, depth):
        rng = np.random.default_rng(seed)
        n = 40
        X = rng.normal(size=(n, 3))
        y = rng.normal(size=n)
        model = fit_gbr(
            X, y, GbrParams(n_iterations=15, max_depth=depth, learning_rate=lr, min_leaf=2)
        )
        assert np.all(np.diff(model.train_loss) <= 1e-10)

    def test_subsample_deterministic(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(80, 4))
        y = rng.normal(size=80)
        params = GbrParams(n_iterations=25, subsample_fraction=0.7, seed=123)
        a = fit_gbr(X, y, params)
        b = fit_gbr(X, y, params)
        assert np.array_equal(a.predict(X), b.predict(X))

    def test_feature_gain_planted(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(300, 5))
        y = 5.0 * X[:, 2] + rng.normal(0, 0.3, 300)
        model = fit_gbr(X, y, GbrParams(n_iterations=50, max_depth=2))
        gain = model.feature_gain()
        assert int(np.argmax(gain)) == 2
        assert gain[2] > 10 * (gain.sum() - gain[2] + 1e-12)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            GbrParams(learning_rate=0.0)
        with pytest.raises(ValueError):
            GbrParams(n_iterations=-1)
        with pytest.raises(ValueError):
            GbrParams(subsample_fraction=1.5)

    def test_expected_value_matches_cover_weights(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(60, 3))
        y = rng.normal(size=60) + X[:, 0]
        model = fit_gbr(X, y, GbrParams(n_iterations=10, max_depth=2))
        # with no subsampling the expectation over training rows equals
        # the mean prediction on the training set
        assert model.expected_value() == pytest.approx(float(np.mean(model.predict(X))), abs=1e-9)
