"""Attribution for fitted models: exact path-dependent tree Shapley
values, permutation importance, and partial-dependence curves.

The tree attribution walks every root-to-leaf path once, maintaining
the distribution of subset sizes for the features met along the path
(the extend/unwind bookkeeping), which yields the exact Shapley values
of the cover-weighted conditional-expectation game in polynomial time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models.bart import BartPosterior
from .models.boosting import TreeEnsemble
from .models.tree import DecisionTree
from .ranking import SelectorRanking, make_ranking


@dataclass(frozen=True)
class ShapMatrix:
    """Per-row, per-feature attributions plus the base value; for every
    row, base_value + sum of the row's attributions equals the model
    prediction."""

    base_value: float
    values: np.ndarray  # (n_rows, n_features)
    model_id: str
    feature_names: tuple[str, ...] = ()

    def importance(self) -> np.ndarray:
        return np.abs(self.values).mean(axis=0)


@dataclass(frozen=True)
class PdpCurve:
    feature: str
    grid: np.ndarray
    mean_prediction: np.ndarray
    band_lower: np.ndarray | None = None
    band_upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(self.mean_prediction)):
            raise ValueError("mean_prediction must be finite")


# -- exact tree attribution ---------------------------------------------------


def _extend(path: list[list[float]], pz: float, po: float, pi: int) -> None:
    length = len(path)
    path.append([pi, pz, po, 1.0 if length == 0 else 0.0])
    for i in range(length - 1, -1, -1):
        path[i + 1][3] += po * path[i][3] * (i + 1) / (length + 1)
        path[i][3] = pz * path[i][3] * (length - i) / (length + 1)


def _unwind(path: list[list[float]], k: int) -> None:
    ud = len(path) - 1
    z, o = path[k][1], path[k][2]
    carry = path[ud][3]
    if o != 0.0:
        for i in range(ud - 1, -1, -1):
            tmp = path[i][3]
            path[i][3] = carry * (ud + 1) / ((i + 1) * o)
            carry = tmp - path[i][3] * z * (ud - i) / (ud + 1)
    else:
        for i in range(ud - 1, -1, -1):
            path[i][3] = path[i][3] * (ud + 1) / (z * (ud - i))
    for i in range(k, ud):
        path[i][0] = path[i + 1][0]
        path[i][1] = path[i + 1][1]
        path[i][2] = path[i + 1][2]
    path.pop()


def _unwound_sum(path: list[list[float]], k: int) -> float:
    ud = len(path) - 1
    z, o = path[k][1], path[k][2]
    total = 0.0
    if o != 0.0:
        carry = path[ud][3]
        for i in range(ud - 1, -1, -1):
            tmp = carry / ((i + 1) * o)
            total += tmp
            carry = path[i][3] - tmp * z * (ud - i)
    else:
        for i in range(ud - 1, -1, -1):
            total += path[i][3] / (z * (ud - i))
    return total * (ud + 1)


def _shap_recurse(
    tree: DecisionTree,
    x: np.ndarray,
    phi: np.ndarray,
    node: int,
    path: list[list[float]],
    pz: float,
    po: float,
    pi: int,
) -> None:
    path = [row[:] for row in path]
    _extend(path, pz, po, pi)
    ud = len(path) - 1
    f = int(tree.feature[node])
    if f < 0:
        leaf_value = float(tree.value[node])
        for i in range(1, ud + 1):
            w = _unwound_sum(path, i)
            phi[int(path[i][0])] += w * (path[i][2] - path[i][1]) * leaf_value
        return
    left, right = int(tree.left[node]), int(tree.right[node])
    if x[f] <= tree.threshold[node]:
        hot, cold = left, right
    else:
        hot, cold = right, left
    w_node = float(tree.cover[node])
    hot_zero = float(tree.cover[hot]) / w_node
    cold_zero = float(tree.cover[cold]) / w_node
    iz = io = 1.0
    k = None
    for i in range(1, ud + 1):
        if path[i][0] == f:
            k = i
            break
    if k is not None:
        iz, io = path[k][1], path[k][2]
        _unwind(path, k)
    _shap_recurse(tree, x, phi, hot, path, hot_zero * iz, io, f)
    _shap_recurse(tree, x, phi, cold, path, cold_zero * iz, 0.0, f)


def tree_shap_single(tree: DecisionTree, x: np.ndarray, n_features: int) -> np.ndarray:
    """Exact Shapley attributions of one tree for one row."""
    if np.any(tree.cover <= 0):
        raise ValueError("tree nodes must carry positive cover counts")
    phi = np.zeros(n_features)
    _shap_recurse(tree, np.asarray(x, dtype=float), phi, 0, [], 1.0, 1.0, -1)
    return phi


def tree_shap(
    model: TreeEnsemble | BartPosterior,
    X: np.ndarray,
    feature_names: tuple[str, ...] | list[str] = (),
    draw_stride: int = 1,
) -> ShapMatrix:
    """Attributions for every row; trees sum and scale by the
    ensemble's shrinkage.  A posterior gets the mean matrix over its
    draws (thinned by draw_stride)."""
    X = np.asarray(X, dtype=float)
    if isinstance(model, BartPosterior):
        kept = range(0, model.n_draws, draw_stride)
        acc: np.ndarray | None = None
        base = 0.0
        for i in kept:
            m = _ensemble_shap(model.draw(i), X)
            acc = m.values if acc is None else acc + m.values
            base += m.base_value
        assert acc is not None
        return ShapMatrix(
            base_value=base / len(kept),
            values=acc / len(kept),
            model_id="bart_posterior",
            feature_names=tuple(feature_names),
        )
    return _ensemble_shap(model, X, tuple(feature_names))


def _ensemble_shap(
    ensemble: TreeEnsemble, X: np.ndarray, feature_names: tuple[str, ...] = ()
) -> ShapMatrix:
    n, p = X.shape
    if ensemble.n_features and p != ensemble.n_features:
        raise ValueError(f"expected {ensemble.n_features} features, got {p}")
    values = np.zeros((n, p))
    for tree in ensemble.trees:
        if np.any(tree.cover <= 0):
            raise ValueError("ensemble trees must carry positive cover counts")
        for r in range(n):
            _shap_recurse(tree, X[r], values[r], 0, [], 1.0, 1.0, -1)
    values *= ensemble.learning_rate
    return ShapMatrix(
        base_value=ensemble.expected_value(),
        values=values,
        model_id=ensemble.kind,
        feature_names=feature_names,
    )


def brute_force_shap(tree: DecisionTree, x: np.ndarray, n_features: int) -> np.ndarray:
    """Exponential-enumeration oracle: Shapley values over all feature
    coalitions with the cover-weighted conditional-expectation value
    function.  Test-sized trees only."""
    import math

    x = np.asarray(x, dtype=float)

    def expectation(node: int, subset: int) -> float:
        f = int(tree.feature[node])
        if f < 0:
            return float(tree.value[node])
        left, right = int(tree.left[node]), int(tree.right[node])
        if subset & (1 << f):
            nxt = left if x[f] <= tree.threshold[node] else right
            return expectation(nxt, subset)
        wl, wr = float(tree.cover[left]), float(tree.cover[right])
        return (expectation(left, subset) * wl + expectation(right, subset) * wr) / (wl + wr)

    # one conditional expectation per coalition bitmask, reused across
    # every marginal-contribution term
    v = [expectation(0, s) for s in range(1 << n_features)]
    fact = math.factorial
    phi = np.zeros(n_features)
    for i in range(n_features):
        bit = 1 << i
        for s in range(1 << n_features):
            if s & bit:
                continue
            size = bin(s).count("1")
            weight = fact(size) * fact(n_features - size - 1) / fact(n_features)
            phi[i] += weight * (v[s | bit] - v[s])
    return phi


# -- rankings over attributions ----------------------------------------------


def shap_importance(shap: ShapMatrix) -> SelectorRanking:
    """Mean |attribution| per feature, expressed as percentages that
    sum to 100 over features with any attribution."""
    raw = shap.importance()
    total = raw.sum()
    pct = raw * (100.0 / total) if total > 0 else raw
    names = list(shap.feature_names) or [f"f{j}" for j in range(len(raw))]
    return make_ranking("shap_importance", names, pct)


def permutation_importance(
    model,
    X: np.ndarray,
    y: np.ndarray,
    metric: str = "rmse",
    n_repeats: int = 5,
    seed: int = 0,
    feature_names: tuple[str, ...] | list[str] = (),
) -> SelectorRanking:
    """Mean metric degradation when one feature column is row-permuted;
    positive scores mean the model relied on the feature."""
    if metric not in ("rmse", "r2"):
        raise ValueError(f"unknown metric {metric!r}")
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    base = _metric_value(y, model.predict(X), metric)
    n, p = X.shape
    scores = np.zeros(p)
    for j in range(p):
        acc = 0.0
        for _ in range(n_repeats):
            perm = rng.permutation(n)
            Xp = X.copy()
            Xp[:, j] = X[perm, j]
            val = _metric_value(y, model.predict(Xp), metric)
            acc += (val - base) if metric == "rmse" else (base - val)
        scores[j] = acc / n_repeats
    names = list(feature_names) or [f"f{j}" for j in range(p)]
    return make_ranking("permutation_importance", names, scores)


def _metric_value(y: np.ndarray, yhat: np.ndarray, metric: str) -> float:
    if metric == "rmse":
        return float(np.sqrt(np.mean((y - yhat) ** 2)))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


# -- partial dependence --------------------------------------------------------


def pdp(
    model,
    X: np.ndarray,
    feature: int,
    grid: int | np.ndarray = 50,
    percentile_clip: tuple[float, float] = (1.0, 99.0),
    feature_name: str | None = None,
    max_background_rows: int | None = None,
    interval: float | None = None,
) -> PdpCurve:
    """Average prediction as one feature sweeps a grid.

    The default grid spans the feature's 1st..99th percentile with
    equally spaced points.  For a posterior model, ``interval`` adds a
    per-draw band at that central coverage.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("need at least one background row")
    if max_background_rows is not None and X.shape[0] > max_background_rows:
        keep = np.linspace(0, X.shape[0] - 1, max_background_rows).astype(int)
        X = X[keep]
    col = X[:, feature]
    if isinstance(grid, (int, np.integer)):
        lo, hi = np.percentile(col, percentile_clip)
        if hi <= lo:
            hi = lo + 1.0
        grid_values = np.linspace(lo, hi, int(grid))
    else:
        grid_values = np.asarray(grid, dtype=float)
    mean_pred = np.empty(len(grid_values))
    lower = upper = None
    if interval is not None and isinstance(model, BartPosterior):
        lower = np.empty(len(grid_values))
        upper = np.empty(len(grid_values))
    work = X.copy()
    for g, value in enumerate(grid_values):
        work[:, feature] = value
        if lower is not None:
            draws = model.predict_draw_matrix(work).mean(axis=1)
            mean_pred[g] = draws.mean()
            tail = (1.0 - interval) / 2.0
            lower[g] = np.quantile(draws, tail)
            upper[g] = np.quantile(draws, 1.0 - tail)
        else:
            mean_pred[g] = float(np.mean(model.predict(work)))
    name = feature_name if feature_name is not None else f"f{feature}"
    return PdpCurve(
        feature=name,
        grid=grid_values,
        mean_prediction=mean_pred,
        band_lower=lower,
        band_upper=upper,
    )
