"""Bayesian additive regression trees fit by backfitting MCMC.

The response is rescaled to [-0.5, 0.5]; each of ``n_trees`` trees gets
a structure prior P(split at depth d) = alpha * (1 + d)^(-beta) with
split rules uniform over available (feature, cutpoint) pairs, leaf
values get a conjugate N(0, sigma_mu^2) prior with
sigma_mu = 0.5 / (k * sqrt(n_trees)), and the noise variance gets a
scaled inverse-chi-squared prior whose scale puts prior mass q below
the sample variance.  One sweep proposes a grow, prune, or change move
per tree, accepts by Metropolis-Hastings under the leaf-marginalized
likelihood, then Gibbs-draws leaf values and the noise variance.

Proposals draw split rules from the same conditional distribution the
prior uses, so rule probabilities cancel in the acceptance ratio and
only structure, leaf-likelihood, and move-count terms remain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .boosting import TreeEnsemble
from .tree import DecisionTree

MOVE_PROBS = (0.4, 0.4, 0.2)  # grow, prune, change on a non-stump tree


@dataclass(frozen=True)
class BartConfig:
    n_trees: int = 100
    n_iterations: int = 1200
    burn_in: int = 200
    thin: int = 1
    alpha: float = 0.95
    beta: float = 2.0
    k: float = 2.0
    nu: float = 3.0
    q: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("burn_in must lie in [0, n_iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        for name in ("k", "nu"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "n_iterations": self.n_iterations,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "alpha": self.alpha,
            "beta": self.beta,
            "k": self.k,
            "nu": self.nu,
            "q": self.q,
            "seed": self.seed,
        }


@dataclass
class PackedForest:
    """One posterior draw: all trees concatenated into flat node arrays
    with per-tree offsets; child indices are local to each tree block."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    offsets: np.ndarray  # (n_trees + 1,) block boundaries

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    def tree(self, t: int) -> DecisionTree:
        s, e = self.offsets[t], self.offsets[t + 1]
        return DecisionTree(
            feature=self.feature[s:e],
            threshold=self.threshold[s:e],
            left=self.left[s:e],
            right=self.right[s:e],
            value=self.value[s:e],
            cover=self.cover[s:e],
            gain=np.zeros(e - s),
        )


@dataclass
class PosteriorPrediction:
    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    interval: float


@dataclass
class BartPosterior:
    """Retained posterior draws of the sum-of-trees model.

    Each draw materializes as a TreeEnsemble whose prediction is
    base_prediction plus the plain sum of its trees (no shrinkage).
    Leaf values and sigma draws are stored on the original response
    scale.
    """

    config: BartConfig
    n_features: int
    base_prediction: float
    sigma_draws: np.ndarray
    packed: list[PackedForest] = field(repr=False, default_factory=list)

    @property
    def n_draws(self) -> int:
        return len(self.packed)

    def draw(self, i: int) -> TreeEnsemble:
        forest = self.packed[i]
        trees = [forest.tree(t) for t in range(forest.n_trees)]
        return TreeEnsemble(
            base_prediction=self.base_prediction,
            trees=trees,
            learning_rate=1.0,
            kind="bart",
            n_features=self.n_features,
        )

    def draws(self) -> list[TreeEnsemble]:
        return [self.draw(i) for i in range(self.n_draws)]

    def _check_X(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def predict_draw_matrix(self, X: np.ndarray, stride: int = 1) -> np.ndarray:
        """(n_kept_draws, n_rows) per-draw predictions."""
        X = self._check_X(X)
        kept = range(0, self.n_draws, stride)
        out = np.empty((len(kept), X.shape[0]))
        for row, i in enumerate(kept):
            forest = self.packed[i]
            acc = np.full(X.shape[0], self.base_prediction)
            for t in range(forest.n_trees):
                acc += forest.tree(t).predict(X)
            out[row] = acc
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Posterior-mean prediction (average over draws)."""
        return self.predict_draw_matrix(X).mean(axis=0)

    def posterior_summary(self, X: np.ndarray, interval: float = 0.9) -> PosteriorPrediction:
        draws = self.predict_draw_matrix(X)
        lo = (1.0 - interval) / 2.0
        return PosteriorPrediction(
            mean=draws.mean(axis=0),
            sd=draws.std(axis=0, ddof=1) if draws.shape[0] > 1 else np.zeros(draws.shape[1]),
            lower=np.quantile(draws, lo, axis=0),
            upper=np.quantile(draws, 1.0 - lo, axis=0),
            interval=interval,
        )

    def split_fractions(self) -> np.ndarray:
        """Per-feature fraction of split rules, averaged over draws that
        contain at least one split."""
        acc = np.zeros(self.n_features)
        used = 0
        for forest in self.packed:
            internal = forest.feature >= 0
            total = int(internal.sum())
            if total == 0:
                continue
            counts = np.bincount(forest.feature[internal], minlength=self.n_features)
            acc += counts / total
            used += 1
        return acc / used if used else acc


class _MutableTree:
    """Sampler-side tree: append-only node arrays plus a per-row leaf
    assignment.  Pruned nodes become unreachable tombstones."""

    __slots__ = ("feature", "threshold", "left", "right", "depth", "leaf_of_row", "value_of")

    def __init__(self, n_rows: int) -> None:
        self.feature = [-1]
        self.threshold = [math.nan]
        self.left = [-1]
        self.right = [-1]
        self.depth = [0]
        self.leaf_of_row = np.zeros(n_rows, dtype=np.int64)
        self.value_of = [0.0]

    @property
    def n_ids(self) -> int:
        return len(self.feature)

    def walk(self) -> list[int]:
        out = []
        stack = [0]
        while stack:
            nid = stack.pop()
            out.append(nid)
            if self.feature[nid] >= 0:
                stack.append(self.right[nid])
                stack.append(self.left[nid])
        return out

    def leaves(self) -> list[int]:
        return [nid for nid in self.walk() if self.feature[nid] < 0]

    def nogs(self) -> list[int]:
        """Internal nodes whose children are both leaves."""
        return [
            nid
            for nid in self.walk()
            if self.feature[nid] >= 0
            and self.feature[self.left[nid]] < 0
            and self.feature[self.right[nid]] < 0
        ]

    def is_stump(self) -> bool:
        return self.feature[0] < 0

    def add_leaf(self, depth: int) -> int:
        self.feature.append(-1)
        self.threshold.append(math.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.depth.append(depth)
        self.value_of.append(0.0)
        return len(self.feature) - 1


def _leaf_loglik(n: np.ndarray, s: np.ndarray, sigma2: float, sigma_mu2: float):
    """Leaf contribution to the log marginal likelihood with mu
    integrated out (terms independent of the partition are dropped)."""
    denom = sigma2 + n * sigma_mu2
    return 0.5 * np.log(sigma2 / denom) + sigma_mu2 * s**2 / (2.0 * sigma2 * denom)


def _split_prob(alpha: float, beta: float, depth: int) -> float:
    return alpha * (1.0 + depth) ** (-beta)


class _BartSampler:
    def __init__(self, X: np.ndarray, y_scaled: np.ndarray, config: BartConfig):
        self.X = X
        self.y = y_scaled
        self.cfg = config
        self.n, self.p = X.shape
        self.rng = np.random.default_rng(config.seed)

        # global cutpoint grids: midpoints of adjacent sorted unique values
        self.cuts: list[np.ndarray] = []
        for f in range(self.p):
            u = np.unique(X[:, f])
            if len(u) < 2:
                self.cuts.append(np.zeros(0))
                continue
            mid = u[:-1] + (u[1:] - u[:-1]) / 2.0
            mid = np.where(mid >= u[1:], u[:-1], mid)  # guard float rounding
            self.cuts.append(mid)

        m = config.n_trees
        self.sigma_mu2 = (0.5 / (config.k * math.sqrt(m))) ** 2
        sigma_hat2 = max(float(np.var(y_scaled)), 1e-12)
        self.inv_gamma_scale = sigma_hat2 / float(stats.invgamma.ppf(config.q, a=config.nu / 2.0))
        self.sigma2 = sigma_hat2

        self.trees = [_MutableTree(self.n) for _ in range(m)]
        self.tree_pred = np.zeros((m, self.n))
        self.resid = y_scaled.copy()

    # -- proposal helpers --------------------------------------------------

    def _valid_ranges(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-feature [lo, hi) index ranges of cutpoints that split
        these rows non-trivially."""
        sub = self.X[rows]
        mins = sub.min(axis=0)
        maxs = sub.max(axis=0)
        lo = np.empty(self.p, dtype=np.int64)
        hi = np.empty(self.p, dtype=np.int64)
        for f in range(self.p):
            grid = self.cuts[f]
            if grid.size == 0:
                lo[f] = hi[f] = 0
                continue
            lo[f] = np.searchsorted(grid, mins[f], side="left")
            hi[f] = np.searchsorted(grid, maxs[f], side="left")
        return lo, hi

    def _draw_rule(self, rows: np.ndarray) -> tuple[int, float] | None:
        """Uniform feature among those with a valid cut, then uniform
        cut; mirrors the prior's rule distribution."""
        lo, hi = self._valid_ranges(rows)
        counts = hi - lo
        splittable = np.flatnonzero(counts > 0)
        if splittable.size == 0:
            return None
        f = int(splittable[self.rng.integers(splittable.size)])
        ci = int(lo[f] + self.rng.integers(counts[f]))
        return f, float(self.cuts[f][ci])

    def _move_probs(self, tree: _MutableTree) -> tuple[float, float, float]:
        if tree.is_stump():
            return 1.0, 0.0, 0.0
        return MOVE_PROBS

    # -- MH moves ----------------------------------------------------------

    def _try_grow(self, tree: _MutableTree, partial: np.ndarray) -> None:
        cfg = self.cfg
        leaves = tree.leaves()
        nid = leaves[self.rng.integers(len(leaves))]
        rows = np.flatnonzero(tree.leaf_of_row == nid)
        rule = self._draw_rule(rows)
        if rule is None:
            return
        f, cut = rule
        go_left = self.X[rows, f] <= cut
        n_l = int(go_left.sum())
        n_r = rows.size - n_l
        r_rows = partial[rows]
        s_l = float(r_rows[go_left].sum())
        s_tot = float(r_rows.sum())
        s_r = s_tot - s_l

        d = tree.depth[nid]
        ps_d = _split_prob(cfg.alpha, cfg.beta, d)
        ps_d1 = _split_prob(cfg.alpha, cfg.beta, d + 1)
        log_prior = math.log(ps_d) + 2.0 * math.log1p(-ps_d1) - math.log1p(-ps_d)

        ll_new = _leaf_loglik(np.array([n_l, n_r]), np.array([s_l, s_r]), self.sigma2, self.sigma_mu2).sum()
        ll_old = float(_leaf_loglik(np.array([rows.size]), np.array([s_tot]), self.sigma2, self.sigma_mu2)[0])

        p_grow_fwd = self._move_probs(tree)[0]
        n_leaves = len(leaves)
        # after growing, the new internal node is a nog; its parent (if
        # it was a nog) no longer is
        n_nogs_after = len(tree.nogs()) + 1
        for cand in tree.nogs():
            if tree.left[cand] == nid or tree.right[cand] == nid:
                n_nogs_after -= 1
                break
        p_prune_rev = MOVE_PROBS[1]  # grown tree is never a stump

        log_accept = (
            log_prior
            + (ll_new - ll_old)
            + math.log(p_prune_rev)
            - math.log(p_grow_fwd)
            + math.log(n_leaves)
            - math.log(n_nogs_after)
        )
        if self.rng.random() >= math.exp(min(0.0, log_accept)):
            return
        lid = tree.add_leaf(d + 1)
        rid = tree.add_leaf(d + 1)
        tree.feature[nid] = f
        tree.threshold[nid] = cut
        tree.left[nid] = lid
        tree.right[nid] = rid
        tree.leaf_of_row[rows[go_left]] = lid
        tree.leaf_of_row[rows[~go_left]] = rid

    def _try_prune(self, tree: _MutableTree, partial: np.ndarray) -> None:
        cfg = self.cfg
        nogs = tree.nogs()
        if not nogs:
            return
        nid = nogs[self.rng.integers(len(nogs))]
        lid, rid = tree.left[nid], tree.right[nid]
        sel_l = tree.leaf_of_row == lid
        sel_r = tree.leaf_of_row == rid
        n_l = int(sel_l.sum())
        n_r = int(sel_r.sum())
        s_l = float(partial[sel_l].sum())
        s_r = float(partial[sel_r].sum())

        d = tree.depth[nid]
        ps_d = _split_prob(cfg.alpha, cfg.beta, d)
        ps_d1 = _split_prob(cfg.alpha, cfg.beta, d + 1)
        log_prior = math.log(ps_d) + 2.0 * math.log1p(-ps_d1) - math.log1p(-ps_d)

        ll_merged = float(
            _leaf_loglik(np.array([n_l + n_r]), np.array([s_l + s_r]), self.sigma2, self.sigma_mu2)[0]
        )
        ll_split = _leaf_loglik(
            np.array([n_l, n_r]), np.array([s_l, s_r]), self.sigma2, self.sigma_mu2
        ).sum()

        p_prune_fwd = self._move_probs(tree)[1]
        n_nogs = len(nogs)
        n_leaves_after = len(tree.leaves()) - 1
        # reverse move grows from the pruned tree
        will_be_stump = nid == 0
        p_grow_rev = 1.0 if will_be_stump else MOVE_PROBS[0]

        log_accept = (
            -log_prior
            + (ll_merged - ll_split)
            + math.log(p_grow_rev)
            - math.log(p_prune_fwd)
            + math.log(n_nogs)
            - math.log(n_leaves_after)
        )
        if self.rng.random() >= math.exp(min(0.0, log_accept)):
            return
        tree.feature[nid] = -1
        tree.threshold[nid] = math.nan
        tree.left[nid] = -1
        tree.right[nid] = -1
        tree.leaf_of_row[sel_l | sel_r] = nid

    def _try_change(self, tree: _MutableTree, partial: np.ndarray) -> None:
        nogs = tree.nogs()
        if not nogs:
            return
        nid = nogs[self.rng.integers(len(nogs))]
        lid, rid = tree.left[nid], tree.right[nid]
        sel = (tree.leaf_of_row == lid) | (tree.leaf_of_row == rid)
        rows = np.flatnonzero(sel)
        rule = self._draw_rule(rows)
        if rule is None:
            return
        f, cut = rule
        go_left = self.X[rows, f] <= cut

        r_rows = partial[rows]
        old_left = tree.leaf_of_row[rows] == lid
        n_old = np.array([old_left.sum(), rows.size - old_left.sum()])
        s_old = np.array([r_rows[old_left].sum(), r_rows[~old_left].sum()])
        n_new = np.array([go_left.sum(), rows.size - go_left.sum()])
        s_new = np.array([r_rows[go_left].sum(), r_rows[~go_left].sum()])

        ll_old = _leaf_loglik(n_old, s_old, self.sigma2, self.sigma_mu2).sum()
        ll_new = _leaf_loglik(n_new, s_new, self.sigma2, self.sigma_mu2).sum()
        if self.rng.random() >= math.exp(min(0.0, ll_new - ll_old)):
            return
        tree.feature[nid] = f
        tree.threshold[nid] = cut
        tree.leaf_of_row[rows[go_left]] = lid
        tree.leaf_of_row[rows[~go_left]] = rid

    # -- Gibbs steps ---------------------------------------------------------

    def _draw_leaf_values(self, tree: _MutableTree, partial: np.ndarray) -> np.ndarray:
        counts = np.bincount(tree.leaf_of_row, minlength=tree.n_ids)
        sums = np.bincount(tree.leaf_of_row, weights=partial, minlength=tree.n_ids)
        leaf_ids = np.flatnonzero(counts)
        var = 1.0 / (1.0 / self.sigma_mu2 + counts[leaf_ids] / self.sigma2)
        mean = var * sums[leaf_ids] / self.sigma2
        vals = self.rng.normal(mean, np.sqrt(var))
        values = np.zeros(tree.n_ids)
        values[leaf_ids] = vals
        for nid, v in zip(leaf_ids, vals):
            tree.value_of[nid] = float(v)
        return values[tree.leaf_of_row]

    def _draw_sigma2(self) -> None:
        ssr = float(self.resid @ self.resid)
        a_post = (self.cfg.nu + self.n) / 2.0
        scale_post = self.inv_gamma_scale + ssr / 2.0
        self.sigma2 = scale_post / float(self.rng.gamma(a_post, 1.0))

    # -- main loop ----------------------------------------------------------

    def run(self) -> list[tuple[PackedForest, float]]:
        cfg = self.cfg
        kept: list[tuple[PackedForest, float]] = []
        for it in range(cfg.n_iterations):
            for j, tree in enumerate(self.trees):
                partial = self.resid + self.tree_pred[j]
                pg, pp, _pc = self._move_probs(tree)
                u = self.rng.random()
                if u < pg:
                    self._try_grow(tree, partial)
                elif u < pg + pp:
                    self._try_prune(tree, partial)
                else:
                    self._try_change(tree, partial)
                new_pred = self._draw_leaf_values(tree, partial)
                self.resid += self.tree_pred[j] - new_pred
                self.tree_pred[j] = new_pred
            self._draw_sigma2()
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                kept.append((self._pack(), math.sqrt(self.sigma2)))
        return kept

    def _pack(self) -> PackedForest:
        feats: list[np.ndarray] = []
        thrs: list[np.ndarray] = []
        lefts: list[np.ndarray] = []
        rights: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        covers: list[np.ndarray] = []
        offsets = [0]
        for tree in self.trees:
            counts = np.bincount(tree.leaf_of_row, minlength=tree.n_ids)
            order = tree.walk()
            local = {nid: i for i, nid in enumerate(order)}
            k = len(order)
            f = np.empty(k, dtype=np.int64)
            t = np.empty(k)
            le = np.full(k, -1, dtype=np.int64)
            ri = np.full(k, -1, dtype=np.int64)
            v = np.empty(k)
            c = np.empty(k)
            for i, nid in enumerate(order):
                f[i] = tree.feature[nid]
                t[i] = tree.threshold[nid]
                if tree.feature[nid] >= 0:
                    le[i] = local[tree.left[nid]]
                    ri[i] = local[tree.right[nid]]
                v[i] = tree.value_of[nid]
                c[i] = counts[nid]
            # internal covers and cover-weighted values, children first
            for i in range(k - 1, -1, -1):
                if f[i] >= 0:
                    c[i] = c[le[i]] + c[ri[i]]
                    v[i] = (v[le[i]] * c[le[i]] + v[ri[i]] * c[ri[i]]) / c[i]
            feats.append(f)
            thrs.append(t)
            lefts.append(le)
            rights.append(ri)
            vals.append(v)
            covers.append(c)
            offsets.append(offsets[-1] + k)
        return PackedForest(
            feature=np.concatenate(feats),
            threshold=np.concatenate(thrs),
            left=np.concatenate(lefts),
            right=np.concatenate(rights),
            value=np.concatenate(vals),
            cover=np.concatenate(covers),
            offsets=np.asarray(offsets, dtype=np.int64),
        )


def fit_bart(X: np.ndarray, y: np.ndarray, config: BartConfig = BartConfig()) -> BartPosterior:
    """Sample the sum-of-trees posterior; deterministic for a fixed seed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("y length must match X rows")
    if n < 10:
        raise ValueError("BART sampler needs at least 10 rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite inputs")

    y_min, y_max = float(np.min(y)), float(np.max(y))
    center = (y_min + y_max) / 2.0
    y_range = y_max - y_min
    if y_range == 0.0:
        y_range = 1.0
    y_scaled = (y - center) / y_range

    sampler = _BartSampler(X, y_scaled, config)
    kept = sampler.run()

    packed: list[PackedForest] = []
    sigmas = np.empty(len(kept))
    for i, (forest, sigma_scaled) in enumerate(kept):
        forest.value *= y_range  # leaf and node values back to response scale
        packed.append(forest)
        sigmas[i] = sigma_scaled * y_range
    return BartPosterior(
        config=config,
        n_features=p,
        base_prediction=center,
        sigma_draws=sigmas,
        packed=packed,
    )
