"""Metrics, cross-validation, residual diagnostics, and side-by-side
model comparison on a shared split."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .tabular import Table, split


@dataclass(frozen=True)
class MetricsReport:
    r2: float
    mse: float
    rmse: float
    n: int
    split_id: str = ""
    r2_defined: bool = True

    def to_dict(self) -> dict:
        return {
            "r2": self.r2,
            "mse": self.mse,
            "rmse": self.rmse,
            "n": self.n,
            "split_id": self.split_id,
            "r2_defined": self.r2_defined,
        }


def compute_metrics(y: np.ndarray, yhat: np.ndarray, split_id: str = "") -> MetricsReport:
    """MSE, RMSE, and R^2 = 1 - SSres/SStot.  Constant y leaves R^2
    undefined (NaN, flagged) rather than raising."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError("y and yhat must be equal-length vectors")
    if y.size < 2:
        raise ValueError("need at least 2 values")
    err = y - yhat
    mse = float(np.mean(err**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return MetricsReport(
            r2=float("nan"), mse=mse, rmse=math.sqrt(mse), n=y.size, split_id=split_id, r2_defined=False
        )
    r2 = 1.0 - float(np.sum(err**2)) / ss_tot
    return MetricsReport(r2=r2, mse=mse, rmse=math.sqrt(mse), n=y.size, split_id=split_id)


def fold_indices(n: int, k_folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic disjoint, exhaustive fold assignment."""
    if not 2 <= k_folds <= n:
        raise ValueError(f"k_folds must lie in [2, {n}]")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(perm[i::k_folds]) for i in range(k_folds)]


ModelFactory = Callable[[np.ndarray, np.ndarray], object]


def _complete_xy(table: Table, target: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Feature matrix and target restricted to fully observed rows."""
    t_idx = table.col_index(target)
    f_idx = [j for j in table.feature_indices() if j != t_idx]
    cols = f_idx + [t_idx]
    complete = table.mask[:, cols].all(axis=1)
    X = table.values[np.ix_(complete, f_idx)]
    y = table.values[complete, t_idx]
    return X, y, [table.meta[j].name for j in f_idx]


def kfold_cv(
    table: Table,
    target: str,
    model_factory: ModelFactory,
    k_folds: int = 5,
    seed: int = 0,
) -> tuple[list[MetricsReport], MetricsReport]:
    """Per-fold metrics plus a pooled report over all out-of-fold
    predictions.  Size-1 folds are allowed; their R^2 is flagged
    undefined and only the pooled report carries it."""
    X, y, _ = _complete_xy(table, target)
    folds = fold_indices(len(y), k_folds, seed)
    reports: list[MetricsReport] = []
    pooled_y = np.empty_like(y)
    pooled_hat = np.empty_like(y)
    for i, test_rows in enumerate(folds):
        train_rows = np.setdiff1d(np.arange(len(y)), test_rows)
        model = model_factory(X[train_rows], y[train_rows])
        yhat = model.predict(X[test_rows])
        pooled_y[test_rows] = y[test_rows]
        pooled_hat[test_rows] = yhat
        if test_rows.size >= 2:
            reports.append(compute_metrics(y[test_rows], yhat, split_id=f"fold{i}"))
        else:
            err = float(y[test_rows][0] - yhat[0])
            reports.append(
                MetricsReport(
                    r2=float("nan"),
                    mse=err**2,
                    rmse=abs(err),
                    n=1,
                    split_id=f"fold{i}",
                    r2_defined=False,
                )
            )
    pooled = compute_metrics(pooled_y, pooled_hat, split_id="pooled")
    return reports, pooled


def cv_r2(X: np.ndarray, y: np.ndarray, model_factory: ModelFactory, k_folds: int, seed: int) -> float:
    """Mean out-of-fold R^2 on raw arrays (wrapper-selector workhorse)."""
    folds = fold_indices(len(y), k_folds, seed)
    scores = []
    for test_rows in folds:
        train_rows = np.setdiff1d(np.arange(len(y)), test_rows)
        model = model_factory(X[train_rows], y[train_rows])
        yhat = model.predict(X[test_rows])
        ss_tot = float(np.sum((y[test_rows] - y[test_rows].mean()) ** 2))
        if ss_tot == 0.0:
            continue
        scores.append(1.0 - float(np.sum((y[test_rows] - yhat) ** 2)) / ss_tot)
    return float(np.mean(scores)) if scores else float("nan")


@dataclass(frozen=True)
class ResidualReport:
    residuals: np.ndarray  # y - yhat
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    kde_grid: np.ndarray
    kde_density: np.ndarray
    qq_theoretical: np.ndarray
    qq_sample: np.ndarray
    skewness: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "residuals": self.residuals.tolist(),
            "hist_edges": self.hist_edges.tolist(),
            "hist_counts": self.hist_counts.tolist(),
            "kde_grid": self.kde_grid.tolist(),
            "kde_density": self.kde_density.tolist(),
            "qq_theoretical": self.qq_theoretical.tolist(),
            "qq_sample": self.qq_sample.tolist(),
            "skewness": self.skewness,
            "degenerate": self.degenerate,
        }


def _silverman_bandwidth(x: np.ndarray) -> float:
    n = x.size
    sd = float(np.std(x, ddof=1))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    scale = min(sd, iqr / 1.349) if iqr > 0 else sd
    return 0.9 * scale * n ** (-0.2)


def residual_report(
    y: np.ndarray,
    yhat: np.ndarray,
    n_bins: int = 20,
    kde_bandwidth: str | float = "silverman",
    kde_points: int = 512,
) -> ResidualReport:
    """Residuals (y - yhat) with histogram, Gaussian-kernel KDE, and a
    standard-normal QQ table over (i - 0.5)/n quantiles."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError("y and yhat must be equal-length vectors")
    n = y.size
    if n < 3:
        raise ValueError("need at least 3 values")
    resid = y - yhat
    sd = float(np.std(resid, ddof=1))
    skew = _skewness(resid)
    counts, edges = np.histogram(resid, bins=n_bins)
    if sd == 0.0:
        empty = np.zeros(0)
        return ResidualReport(
            residuals=resid,
            hist_edges=edges,
            hist_counts=counts,
            kde_grid=empty,
            kde_density=empty,
            qq_theoretical=empty,
            qq_sample=empty,
            skewness=skew,
            degenerate=True,
        )
    if kde_bandwidth == "silverman":
        h = _silverman_bandwidth(resid)
    else:
        h = float(kde_bandwidth)
        if h <= 0:
            raise ValueError("explicit bandwidth must be positive")
    grid = np.linspace(resid.min() - 4 * h, resid.max() + 4 * h, kde_points)
    z = (grid[:, None] - resid[None, :]) / h
    density = np.exp(-0.5 * z**2).sum(axis=1) / (n * h * math.sqrt(2 * math.pi))
    standardized = np.sort((resid - resid.mean()) / sd)
    probs = (np.arange(1, n + 1) - 0.5) / n
    theoretical = stats.norm.ppf(probs)
    return ResidualReport(
        residuals=resid,
        hist_edges=edges,
        hist_counts=counts,
        kde_grid=grid,
        kde_density=density,
        qq_theoretical=theoretical,
        qq_sample=standardized,
        skewness=skew,
    )


def _skewness(x: np.ndarray) -> float:
    n = x.size
    sd = float(np.std(x, ddof=0))
    if n < 3 or sd == 0.0:
        return 0.0
    g1 = float(np.mean((x - x.mean()) ** 3)) / sd**3
    return math.sqrt(n * (n - 1)) / (n - 2) * g1


@dataclass(frozen=True)
class ComparisonConfig:
    """One pipeline variant: an optional imputer and feature selector
    plus the model factory, all as callables over package types."""

    label: str
    model_factory: ModelFactory
    imputer: Callable[[Table], Table] | None = None
    selector: Callable[[Table, str], list[str]] | None = None
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    metrics: MetricsReport | None
    selected_features: tuple[str, ...] = ()
    error: str | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "selected_features": list(self.selected_features),
            "error": self.error,
            "detail": self.detail,
        }


def model_comparison(
    table: Table,
    target: str,
    configs: Sequence[ComparisonConfig],
    test_fraction: float = 0.2,
    seed: int = 0,
) -> list[ComparisonRow]:
    """Evaluate every config against the identical train/test row
    partition; rows sort by test R^2 descending with failed configs
    last.  A failing config aborts only its own row."""
    if not configs:
        raise ValueError("need at least one config")
    rows: list[ComparisonRow] = []
    for cfg in configs:
        try:
            working = cfg.imputer(table) if cfg.imputer else table
            train, test = split(working, test_fraction, seed)
            if cfg.selector:
                features = list(cfg.selector(train, target))
            else:
                t_idx = working.col_index(target)
                features = [
                    working.meta[j].name for j in working.feature_indices() if j != t_idx
                ]
            f_idx = [train.col_index(f) for f in features]
            t_idx = train.col_index(target)
            Xtr = np.nan_to_num(train.values[:, f_idx])
            ytr = train.values[:, t_idx]
            Xte = np.nan_to_num(test.values[:, f_idx])
            yte = test.values[:, t_idx]
            ok_tr = train.mask[:, t_idx]
            ok_te = test.mask[:, t_idx]
            model = cfg.model_factory(Xtr[ok_tr], ytr[ok_tr])
            metrics = compute_metrics(
                yte[ok_te], model.predict(Xte[ok_te]), split_id=f"seed{seed}"
            )
            rows.append(
                ComparisonRow(
                    label=cfg.label,
                    metrics=metrics,
                    selected_features=tuple(features),
                    detail=dict(cfg.detail, seed=seed, test_fraction=test_fraction),
                )
            )
        except Exception as exc:  # noqa: BLE001 - failed config becomes a row
            rows.append(
                ComparisonRow(
                    label=cfg.label,
                    metrics=None,
                    error=f"{type(exc).__name__}: {exc}",
                    detail=dict(cfg.detail, seed=seed, test_fraction=test_fraction),
                )
            )
    rows.sort(
        key=lambda r: (
            r.metrics is None,
            -(r.metrics.r2 if r.metrics and r.metrics.r2_defined else float("-inf")),
        )
    )
    return rows
