import numpy as np
import pytest

from bwpipe.imputation import (
    KnnConfig,
    MiceConfig,
    gower_distances,
    knn_impute,
    mean_impute,
    mice_impute,
    pool_imputations,
)
from bwpipe.tabular import ColumnMeta, Table


def make_table(columns, kinds=None, roles=None):
    """columns: dict name -> list (np.nan marks missing)."""
    names = list(columns)
    values = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    mask = ~np.isnan(values)
    kinds = kinds or {}
    roles = roles or {}
    meta = [
        ColumnMeta(name=n, kind=kinds.get(n, "continuous"), role=roles.get(n, "feature"))
        for n in names
    ]
    return Table(values, mask, meta)


class TestKnnImpute:
    def test_unanimous_neighbors(self):
        t = make_table({"x": [1, 2, 3], "y": [0, np.nan, 0]}, kinds={"y": "nominal"})
        out = knn_impute(t, KnnConfig(k=2), {"y"})
        assert out.values[1, 1] == 0.0
        assert out.imputed[1, 1] and not out.imputed[0, 1]

    def test_mode_tie_breaks_to_lower_code(self):
        t = make_table({"x": [1, 2, 3], "y": [0, np.nan, 1]}, kinds={"y": "nominal"})
        out = knn_impute(t, KnnConfig(k=2), {"y"})
        assert out.values[1, 1] == 0.0

    def test_continuous_target_uses_neighbor_mean(self):
        t = make_table({"x": [1, 2, 3, 4], "y": [10.0, np.nan, 30.0, 40.0]})
        out = knn_impute(t, KnnConfig(k=2), {"y"})
        assert out.values[1, 1] == pytest.approx(20.0)  # neighbors rows 0 and 2

    def test_observed_cells_untouched(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 3, 30).astype(float)
        y[[3, 7, 11]] = np.nan
        t = make_table({"x": rng.normal(size=30), "y": y}, kinds={"y": "ordinal"})
        out = knn_impute(t, KnnConfig(k=3), {"y"})
        obs = t.mask
        assert np.array_equal(out.values[obs], t.values[obs])
        assert out.mask.all()

    def test_accuracy_beats_majority_baseline(self):
        rng = np.random.default_rng(1)
        n = 400
        x = rng.uniform(0, 1, n)
        codes = np.minimum((x * 4).astype(int), 3).astype(float)  # y quantizes x
        truth = codes.copy()
        missing_rows = rng.choice(n, size=120, replace=False)
        codes[missing_rows] = np.nan
        t = make_table({"x": x, "y": codes}, kinds={"y": "ordinal"})
        out = knn_impute(t, KnnConfig(k=5), {"y"})
        acc = float(np.mean(out.values[missing_rows, 1] == truth[missing_rows]))
        observed = truth[~np.isin(np.arange(n), missing_rows)]
        counts = np.bincount(observed.astype(int))
        majority = counts.max() / counts.sum()
        assert acc > majority + 0.2

    def test_entirely_missing_column_errors(self):
        t = make_table({"x": [1, 2, 3], "y": [np.nan] * 3}, kinds={"y": "nominal"})
        with pytest.raises(ValueError):
            knn_impute(t, KnnConfig(k=1), {"y"})

    def test_k_out_of_range(self):
        t = make_table({"x": [1, 2, 3], "y": [0, np.nan, 1]}, kinds={"y": "nominal"})
        with pytest.raises(ValueError):
            knn_impute(t, KnnConfig(k=3), {"y"})

    def test_gower_mixed_distance(self):
        t = make_table(
            {"c": [0.0, 10.0, 5.0], "d": [0, 0, 1]},
            kinds={"d": "nominal"},
        )
        d = gower_distances(t)
        assert d[0, 1] == pytest.approx((1.0 + 0.0) / 2)  # range-normalized + match
        assert d[0, 2] == pytest.approx((0.5 + 1.0) / 2)
        assert np.isinf(d[0, 0])


class TestMiceImpute:
    def _linear_cohort(self, seed=0, n=300, miss=0.3):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        y_true = 2.0 * x + rng.normal(0, 0.5, n)
        y = y_true.copy()
        missing = rng.random(n) < miss
        missing[:2] = False
        y[missing] = np.nan
        t = make_table({"x": x, "y": y})
        return t, y_true, missing

    def test_fully_observed_column_unchanged(self):
        t, _, _ = self._linear_cohort()
        outs = mice_impute(t, MiceConfig(n_imputations=3, seed=0), {"x", "y"})
        for out in outs:
            assert np.array_equal(out.values[:, 0], t.values[:, 0])

    def test_deterministic(self):
        t, _, _ = self._linear_cohort()
        a = mice_impute(t, MiceConfig(seed=5), {"y"})
        b = mice_impute(t, MiceConfig(seed=5), {"y"})
        for ta, tb in zip(a, b):
            assert np.array_equal(ta.values, tb.values)

    def test_beats_mean_imputation_by_twenty_percent(self):
        t, y_true, missing = self._linear_cohort(seed=3, n=500)
        chains = mice_impute(t, MiceConfig(seed=1), {"y"})
        pooled = pool_imputations(chains)
        mice_rmse = float(np.sqrt(np.mean((pooled.values[missing, 1] - y_true[missing]) ** 2)))
        naive = mean_impute(t, {"y"})
        mean_rmse = float(np.sqrt(np.mean((naive.values[missing, 1] - y_true[missing]) ** 2)))
        assert mice_rmse <= 0.8 * mean_rmse

    def test_ordering_mice_knn_mean(self):
        # MCAR + multi-column linear structure: the conditional model
        # exploits all predictors, neighbor voting dilutes over noise
        # columns, the column mean ignores structure entirely
        rng = np.random.default_rng(9)
        n = 500
        preds = rng.normal(size=(n, 4))
        noise_cols = rng.normal(size=(n, 4))
        y_true = preds @ np.array([2.0, -1.5, 1.0, 0.5]) + rng.normal(0, 0.3, n)
        y = y_true.copy()
        missing = rng.random(n) < 0.3
        missing[:2] = False
        y[missing] = np.nan
        cols = {f"p{j}": preds[:, j] for j in range(4)}
        cols.update({f"n{j}": noise_cols[:, j] for j in range(4)})
        cols["y"] = y
        t = make_table(cols)
        col = t.col_index("y")

        pooled = pool_imputations(mice_impute(t, MiceConfig(seed=2), {"y"}))
        knn_f = knn_impute(t, KnnConfig(k=5), {"y"})
        naive = mean_impute(t, {"y"})

        def rmse(table):
            return float(np.sqrt(np.mean((table.values[missing, col] - y_true[missing]) ** 2)))

        assert rmse(pooled) < rmse(knn_f) < rmse(naive)

    def test_no_missing_cells_remain(self):
        t, _, _ = self._linear_cohort()
        for out in mice_impute(t, MiceConfig(n_imputations=2, seed=0), {"y"}):
            assert out.mask.all()

    def test_ridge_linear_model_variant(self):
        t, y_true, missing = self._linear_cohort(seed=4)
        chains = mice_impute(
            t, MiceConfig(conditional_model="ridge_linear", seed=3), {"y"}
        )
        pooled = pool_imputations(chains)
        rmse = float(np.sqrt(np.mean((pooled.values[missing, 1] - y_true[missing]) ** 2)))
        naive = mean_impute(t, {"y"})
        mean_rmse = float(np.sqrt(np.mean((naive.values[missing, 1] - y_true[missing]) ** 2)))
        assert rmse < mean_rmse

    def test_rejects_discrete_target(self):
        t = make_table({"x": [1, 2, 3], "y": [0, np.nan, 1]}, kinds={"y": "ordinal"})
        with pytest.raises(ValueError):
            mice_impute(t, MiceConfig(), {"y"})

    def test_rejects_underobserved_column(self):
        t = make_table({"x": [1.0, 2.0, 3.0], "y": [5.0, np.nan, np.nan]})
        with pytest.raises(ValueError):
            mice_impute(t, MiceConfig(), {"y"})


class TestPoolImputations:
    def test_single_is_identity(self):
        t = make_table({"x": [1, 2, 3], "y": [1.0, np.nan, 3.0]})
        out = mice_impute(t, MiceConfig(n_imputations=1, seed=0), {"y"})
        pooled = pool_imputations(out)
        assert pooled.equals(out[0])

    def test_mean_of_two(self):
        t = make_table({"x": [1, 2, 3], "y": [1.0, np.nan, 3.0]})
        a = t.with_cells(1, np.array([1]), np.array([10.0]))
        b = t.with_cells(1, np.array([1]), np.array([20.0]))
        pooled = pool_imputations([a, b])
        assert pooled.values[1, 1] == pytest.approx(15.0)
        assert pooled.values[0, 1] == 1.0

    def test_pooled_rmse_bounded_by_worst_chain(self):
        rng = np.random.default_rng(11)
        n = 400
        x = rng.normal(size=n)
        y_true = 1.5 * x + rng.normal(0, 0.3, n)
        y = y_true.copy()
        missing = rng.random(n) < 0.3
        missing[:2] = False
        y[missing] = np.nan
        t = make_table({"x": x, "y": y})
        chains = mice_impute(t, MiceConfig(n_imputations=5, seed=7), {"y"})
        rmses = [
            float(np.sqrt(np.mean((c.values[missing, 1] - y_true[missing]) ** 2)))
            for c in chains
        ]
        pooled = pool_imputations(chains)
        pooled_rmse = float(np.sqrt(np.mean((pooled.values[missing, 1] - y_true[missing]) ** 2)))
        assert pooled_rmse <= max(rmses) + 1e-12

    def test_shape_mismatch_errors(self):
        t1 = make_table({"x": [1, 2, 3], "y": [1.0, np.nan, 3.0]})
        t2 = make_table({"x": [1, 2], "y": [1.0, 2.0]})
        with pytest.raises(ValueError):
            pool_imputations([t1, t2])
