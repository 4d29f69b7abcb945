"""Feature scoring and selection: filter statistics, wrapper searches,
embedded model importances, and rank-consensus aggregation.

Filter scores use pairwise-complete rows so they work before or after
imputation; wrappers and embedded methods need fully observed rows and
are meant to run on a completed table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .evaluation import cv_r2
from .models import GbrParams, fit_gbr, fit_linear, model_importance
from .ranking import SelectorRanking, make_ranking
from .tabular import Table

F_STAT_CAP = 1e12


def _features_and_target(table: Table, target: str):
    t_idx = table.col_index(target)
    if table.meta[t_idx].kind != "continuous":
        raise ValueError(f"target {target!r} must be continuous")
    f_idx = [j for j in table.feature_indices() if j != t_idx]
    names = [table.meta[j].name for j in f_idx]
    return f_idx, names, t_idx


def _complete_matrix(table: Table, target: str):
    """Fully observed rows; wrapper and embedded methods need them."""
    f_idx, names, t_idx = _features_and_target(table, target)
    cols = f_idx + [t_idx]
    rows = table.mask[:, cols].all(axis=1)
    X = table.values[np.ix_(rows.nonzero()[0], f_idx)]
    y = table.values[rows, t_idx]
    if len(y) < 10:
        raise ValueError("fewer than 10 fully observed rows")
    return X, y, names


# -- filter family -----------------------------------------------------------


def correlation_scores(table: Table, target: str, method: str = "pearson") -> SelectorRanking:
    """|coefficient| per feature on pairwise-complete rows; features
    with fewer than 3 complete pairs or zero variance score 0."""
    if method not in ("pearson", "spearman", "kendall"):
        raise ValueError(f"unknown correlation method {method!r}")
    f_idx, names, t_idx = _features_and_target(table, target)
    y_all = table.values[:, t_idx]
    y_mask = table.mask[:, t_idx]
    scores = np.zeros(len(f_idx))
    for pos, j in enumerate(f_idx):
        both = table.mask[:, j] & y_mask
        if int(both.sum()) < 3:
            continue
        x = table.values[both, j]
        y = y_all[both]
        if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
            continue
        if method == "pearson":
            c = _pearson(x, y)
        elif method == "spearman":
            c = _pearson(stats.rankdata(x), stats.rankdata(y))
        else:
            c = stats.kendalltau(x, y).statistic
        scores[pos] = abs(c) if np.isfinite(c) else 0.0
    return make_ranking(method, names, scores)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / denom if denom > 0 else 0.0


def equal_frequency_bins(x: np.ndarray, bins: int) -> np.ndarray:
    """Quantile-bin codes; duplicate quantile edges collapse."""
    edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
    edges = np.unique(edges)
    return np.searchsorted(edges, x, side="left")


def mutual_information_scores(table: Table, target: str, bins: int = 10) -> SelectorRanking:
    """Plug-in mutual information in nats; continuous variables are
    discretized into equal-frequency bins, discrete codes used as-is."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    f_idx, names, t_idx = _features_and_target(table, target)
    y_all = table.values[:, t_idx]
    y_mask = table.mask[:, t_idx]
    scores = np.zeros(len(f_idx))
    for pos, j in enumerate(f_idx):
        both = table.mask[:, j] & y_mask
        if int(both.sum()) < 3:
            continue
        x = table.values[both, j]
        y = y_all[both]
        xb = equal_frequency_bins(x, bins) if table.meta[j].kind == "continuous" else x.astype(int)
        yb = equal_frequency_bins(y, bins)
        scores[pos] = _plugin_mi(xb, yb)
    return make_ranking("mutual_information", names, scores)


def _plugin_mi(xb: np.ndarray, yb: np.ndarray) -> float:
    _, xi = np.unique(xb, return_inverse=True)
    _, yi = np.unique(yb, return_inverse=True)
    nx = xi.max() + 1
    ny = yi.max() + 1
    joint = np.bincount(xi * ny + yi, minlength=nx * ny).reshape(nx, ny).astype(float)
    joint /= joint.sum()
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    nz = joint > 0
    ratio = joint[nz] / np.outer(px, py)[nz]
    return float(np.sum(joint[nz] * np.log(ratio)))


def binned_entropy(x: np.ndarray, bins: int = 10) -> float:
    """Entropy (nats) of the equal-frequency binned variable; the MI
    ceiling for a feature identical to the target."""
    xb = equal_frequency_bins(x, bins)
    _, counts = np.unique(xb, return_counts=True)
    prob = counts / counts.sum()
    return float(-np.sum(prob * np.log(prob)))


def anova_f_scores(table: Table, target: str, bins: int = 10) -> SelectorRanking:
    """Between/within variance ratio of the target across feature
    groups; continuous features group by equal-frequency bins.  Zero
    within-variance caps at a large flagged value; single-group
    features score 0."""
    f_idx, names, t_idx = _features_and_target(table, target)
    y_all = table.values[:, t_idx]
    y_mask = table.mask[:, t_idx]
    scores = np.zeros(len(f_idx))
    for pos, j in enumerate(f_idx):
        both = table.mask[:, j] & y_mask
        if int(both.sum()) < 3:
            continue
        x = table.values[both, j]
        y = y_all[both]
        groups = equal_frequency_bins(x, bins) if table.meta[j].kind == "continuous" else x.astype(int)
        scores[pos] = _f_statistic(groups, y)
    return make_ranking("anova_f", names, scores)


def _f_statistic(groups: np.ndarray, y: np.ndarray) -> float:
    _, gi = np.unique(groups, return_inverse=True)
    g = gi.max() + 1
    n = len(y)
    if g < 2 or n <= g:
        return 0.0
    counts = np.bincount(gi).astype(float)
    sums = np.bincount(gi, weights=y)
    means = sums / counts
    grand = y.mean()
    ssb = float(np.sum(counts * (means - grand) ** 2))
    ssw = float(np.sum((y - means[gi]) ** 2))
    if ssw == 0.0:
        return F_STAT_CAP
    return (ssb / (g - 1)) / (ssw / (n - g))


def relief_f_scores(
    table: Table,
    target: str,
    n_neighbors: int = 10,
    n_samples: int | None = None,
    seed: int = 0,
) -> SelectorRanking:
    """Regression Relief: feature weights contrast how often feature
    differences co-occur with target differences among nearest
    neighbors.  Features are range-normalized; weights land in [-1, 1].
    """
    X, y, names = _complete_matrix(table, target)
    n, p = X.shape
    if n_neighbors < 1 or n_neighbors > n - 1:
        raise ValueError("n_neighbors out of range")
    rng = np.random.default_rng(seed)
    m = n if n_samples is None else min(n_samples, n)
    sample_rows = rng.permutation(n)[:m] if m < n else np.arange(n)

    ranges = np.ptp(X, axis=0)
    ranges[ranges == 0.0] = 1.0
    Z = X / ranges
    y_range = float(np.ptp(y))
    if y_range == 0.0:
        return make_ranking("relief_f", names, np.zeros(p))
    yn = y / y_range

    w = 1.0 / n_neighbors
    n_dc = 0.0
    n_da = np.zeros(p)
    n_dcda = np.zeros(p)
    for row in sample_rows:
        d = np.abs(Z - Z[row]).sum(axis=1)
        d[row] = np.inf
        near = np.argpartition(d, n_neighbors - 1)[:n_neighbors]
        d_feat = np.abs(Z[near] - Z[row])  # (k, p), already in [0, 1]
        d_y = np.abs(yn[near] - yn[row])  # (k,)
        n_dc += w * float(d_y.sum())
        n_da += w * d_feat.sum(axis=0)
        n_dcda += w * (d_y[:, None] * d_feat).sum(axis=0)
    total = float(m)
    if n_dc == 0.0 or n_dc == total:
        return make_ranking("relief_f", names, np.zeros(p))
    weights = n_dcda / n_dc - (n_da - n_dcda) / (total - n_dc)
    return make_ranking("relief_f", names, weights)


def select_k_best(ranking: SelectorRanking, k: int) -> list[str]:
    """Top-k feature names by rank (boundary ties already resolved to
    the earlier column when the ranking was built)."""
    return ranking.top(k)


# -- wrapper family ----------------------------------------------------------

ModelFactory = Callable[[np.ndarray, np.ndarray], object]


def forward_select(
    table: Table,
    target: str,
    model_factory: ModelFactory,
    k: int,
    cv_folds: int = 5,
    seed: int = 0,
) -> list[str]:
    """Greedy forward selection by mean cross-validated R^2; stops at k
    features or when no candidate improves the score."""
    X, y, names = _complete_matrix(table, target)
    if not 1 <= k <= len(names):
        raise ValueError(f"k must lie in [1, {len(names)}]")
    chosen: list[int] = []
    best_score = 0.0  # a mean predictor scores R^2 = 0
    remaining = list(range(len(names)))
    while len(chosen) < k and remaining:
        round_best = None
        round_score = best_score
        for j in remaining:
            cols = chosen + [j]
            score = cv_r2(X[:, cols], y, model_factory, cv_folds, seed)
            if np.isfinite(score) and score > round_score:
                round_best = j
                round_score = score
        if round_best is None:
            break
        chosen.append(round_best)
        remaining.remove(round_best)
        best_score = round_score
    return [names[j] for j in chosen]


def rfe(
    table: Table,
    target: str,
    model_factory: ModelFactory,
    k: int,
    step: int = 1,
) -> list[str]:
    """Recursive feature elimination: refit, drop the ``step`` least
    important features, repeat until k remain (the final round clamps
    to land exactly on k)."""
    X, y, names = _complete_matrix(table, target)
    if not 1 <= k < len(names):
        raise ValueError(f"k must lie in [1, {len(names) - 1}]")
    if step < 1:
        raise ValueError("step must be >= 1")
    active = list(range(len(names)))
    while len(active) > k:
        model = model_factory(X[:, active], y)
        importance = np.asarray(model_importance(model), dtype=float)
        drop = min(step, len(active) - k)
        order = np.argsort(importance, kind="stable")[:drop]
        for pos in sorted(order, reverse=True):
            del active[pos]
    return [names[j] for j in active]


@dataclass(frozen=True)
class BorutaVerdict:
    verdicts: dict[str, str]  # confirmed | tentative | rejected
    n_rounds: int
    alpha: float
    hit_counts: dict[str, int]

    def confirmed(self) -> list[str]:
        return [f for f, v in self.verdicts.items() if v == "confirmed"]

    def rejected(self) -> list[str]:
        return [f for f, v in self.verdicts.items() if v == "rejected"]

    def tentative(self) -> list[str]:
        return [f for f, v in self.verdicts.items() if v == "tentative"]

    def to_dict(self) -> dict:
        return {
            "verdicts": dict(self.verdicts),
            "n_rounds": self.n_rounds,
            "alpha": self.alpha,
            "hit_counts": dict(self.hit_counts),
        }


def boruta(
    table: Table,
    target: str,
    ensemble_params: dict | None = None,
    alpha: float = 0.05,
    max_rounds: int = 50,
    seed: int = 0,
) -> BorutaVerdict:
    """Shadow-feature relevance test.

    Each round refits a boosted ensemble on the undecided and confirmed
    features plus freshly permuted shadow copies; a feature scores a
    hit when its gain exceeds the best shadow gain.  Hit counts face a
    two-sided binomial test at level alpha with a Bonferroni correction
    across features; rejected features leave the design, and whatever
    is unresolved after max_rounds stays tentative.
    """
    X, y, names = _complete_matrix(table, target)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    params = dict(ensemble_params or {})
    params.setdefault("n_iterations", 50)
    params.setdefault("max_depth", 3)
    params.setdefault("learning_rate", 0.1)
    # per-tree column subsampling keeps shadows competitive for splits;
    # with a deterministic greedy fit the best shadow would otherwise
    # never appear in a tree and any chance-correlated feature would
    # hit every round
    params.setdefault("colsample_fraction", 0.4)
    params.setdefault("subsample_fraction", 0.6)
    rng = np.random.default_rng(seed)
    p = len(names)
    n = len(y)

    status = np.zeros(p, dtype=int)  # 0 undecided, 1 confirmed, -1 rejected
    hits = np.zeros(p, dtype=int)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        active = np.flatnonzero(status >= 0)
        if not (status == 0).any():
            break
        Xa = X[:, active]
        shadows = Xa.copy()
        for c in range(shadows.shape[1]):
            shadows[:, c] = shadows[rng.permutation(n), c]
        design = np.hstack([Xa, shadows])
        fit_seed = int(rng.integers(2**31 - 1))
        model = fit_gbr(design, y, GbrParams(seed=fit_seed, **params))
        gain = model.feature_gain()
        real = gain[: len(active)]
        shadow_max = float(gain[len(active):].max()) if len(active) else 0.0
        hits[active[real > shadow_max]] += 1

        # two-sided binomial test at 0.5; Bonferroni over the feature
        # count and, for promotion, over the rounds elapsed (the same
        # feature is retested every round)
        undecided = np.flatnonzero(status == 0)
        p_hi = stats.binom.sf(hits[undecided] - 1, rounds, 0.5)
        p_lo = stats.binom.cdf(hits[undecided], rounds, 0.5)
        status[undecided[p_hi <= alpha / (p * rounds)]] = 1
        status[undecided[p_lo <= alpha / p]] = -1

    verdicts = {
        names[j]: ("confirmed" if status[j] == 1 else "rejected" if status[j] == -1 else "tentative")
        for j in range(p)
    }
    return BorutaVerdict(
        verdicts=verdicts,
        n_rounds=rounds,
        alpha=alpha,
        hit_counts={names[j]: int(hits[j]) for j in range(p)},
    )


# -- embedded family ---------------------------------------------------------


def embedded_scores(
    table: Table,
    target: str,
    method: str = "lasso",
    l1_penalty: float | None = None,
    l2_penalty: float | None = None,
    gbr_params: dict | None = None,
) -> SelectorRanking:
    """|coefficient| from penalized linear fits on standardized
    features, or total split gain from a boosted ensemble."""
    X, y, names = _complete_matrix(table, target)
    if method == "tree_gain":
        params = dict(gbr_params or {})
        params.setdefault("n_iterations", 100)
        params.setdefault("max_depth", 3)
        params.setdefault("learning_rate", 0.1)
        model = fit_gbr(X, y, GbrParams(**params))
        return make_ranking("tree_gain", names, model.feature_gain())
    if method not in ("lasso", "ridge", "elastic_net"):
        raise ValueError(f"unknown embedded method {method!r}")
    lmax = _lasso_lambda_max(X, y)
    if method == "lasso":
        l1 = 0.01 * lmax if l1_penalty is None else l1_penalty
        l2 = 0.0
    elif method == "ridge":
        l1 = 0.0
        l2 = 1.0 if l2_penalty is None else l2_penalty
    else:
        l1 = 0.005 * lmax if l1_penalty is None else l1_penalty
        l2 = 0.005 * lmax if l2_penalty is None else l2_penalty
    model = fit_linear(X, y, l1_penalty=l1, l2_penalty=l2, standardize=True)
    return make_ranking(method, names, np.abs(model.coefficients))


def _lasso_lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest L1 penalty that zeroes every standardized coefficient."""
    sd = X.std(axis=0, ddof=1)
    sd[sd == 0.0] = 1.0
    Z = (X - X.mean(axis=0)) / sd
    return float(np.abs(Z.T @ (y - y.mean())).max())


def lasso_cv_penalty(
    X: np.ndarray,
    y: np.ndarray,
    n_penalties: int = 20,
    cv_folds: int = 5,
    seed: int = 0,
) -> float:
    """Pick the L1 penalty with the best mean out-of-fold R^2 along a
    log-spaced path under lambda_max."""
    lmax = _lasso_lambda_max(X, y)
    grid = lmax * np.logspace(-3, -0.3, n_penalties)
    best_pen, best_score = grid[0], -np.inf
    for pen in grid:
        score = cv_r2(
            X, y, lambda Xt, yt: fit_linear(Xt, yt, l1_penalty=pen), cv_folds, seed
        )
        if np.isfinite(score) and score > best_score:
            best_pen, best_score = pen, score
    return float(best_pen)


# -- consensus ---------------------------------------------------------------


def aggregate_rankings(
    rankings: Sequence[SelectorRanking], method: str = "borda"
) -> SelectorRanking:
    """Borda consensus: each method grants (n - rank) points per
    feature; ties resolve by column order."""
    if method != "borda":
        raise ValueError(f"unknown aggregation method {method!r}")
    if not rankings:
        raise ValueError("need at least one ranking")
    universe = rankings[0].feature_order
    for r in rankings[1:]:
        if set(r.feature_order) != set(universe):
            raise ValueError("rankings cover different feature universes")
    n = len(universe)
    points = np.zeros(n)
    for r in sorted(rankings, key=lambda r: r.method_id):
        ranks = r.ranks()
        for i, name in enumerate(universe):
            points[i] += n - ranks[name]
    return make_ranking("borda_consensus", list(universe), points)
