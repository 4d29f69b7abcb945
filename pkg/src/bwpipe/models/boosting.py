"""Stagewise least-squares gradient boosting with shrinkage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tree import DecisionTree, grow_tree


@dataclass(frozen=True)
class GbrParams:
    n_iterations: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 5
    subsample_fraction: float = 1.0
    colsample_fraction: float = 1.0  # features offered to each tree
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        for name in ("subsample_fraction", "colsample_fraction"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "n_iterations": self.n_iterations,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_leaf": self.min_leaf,
            "subsample_fraction": self.subsample_fraction,
            "colsample_fraction": self.colsample_fraction,
            "seed": self.seed,
        }


@dataclass
class TreeEnsemble:
    """Additive tree model: base_prediction + learning_rate * sum of trees.

    ``kind`` distinguishes boosted ensembles (shrinkage applies) from
    posterior-draw ensembles (learning_rate fixed at 1).
    """

    base_prediction: float
    trees: list[DecisionTree]
    learning_rate: float = 1.0
    kind: str = "gbr"
    n_features: int = 0
    train_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or (self.n_features and X.shape[1] != self.n_features):
            raise ValueError(
                f"expected ({X.shape[0]}, {self.n_features}) feature matrix, got {X.shape}"
            )
        out = np.full(X.shape[0], self.base_prediction, dtype=float)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def expected_value(self) -> float:
        """Cover-weighted mean prediction over the training distribution."""
        return self.base_prediction + self.learning_rate * sum(
            t.expected_value() for t in self.trees
        )

    def feature_gain(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        for tree in self.trees:
            out += tree.feature_gain(self.n_features)
        return out


def _remap_tree_features(tree: DecisionTree, cols: np.ndarray) -> DecisionTree:
    """Rewrite split feature indices from a column-subset fit back to
    the full feature space."""
    feature = tree.feature.copy()
    internal = feature >= 0
    feature[internal] = cols[feature[internal]]
    return DecisionTree(
        feature=feature,
        threshold=tree.threshold,
        left=tree.left,
        right=tree.right,
        value=tree.value,
        cover=tree.cover,
        gain=tree.gain,
    )


def fit_gbr(X: np.ndarray, y: np.ndarray, params: GbrParams = GbrParams()) -> TreeEnsemble:
    """Boost depth-bounded least-squares trees against current residuals.

    base_prediction is mean(y); each round fits a tree to residuals by
    greedy variance-reduction splits over an exhaustive threshold scan
    and adds it with shrinkage.  Training MSE is recorded per round.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("y length must match X rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite inputs")
    if n < 2 * params.min_leaf:
        raise ValueError(f"need at least {2 * params.min_leaf} rows for min_leaf={params.min_leaf}")

    rng = np.random.default_rng(params.seed)
    base = float(np.mean(y))
    pred = np.full(n, base)
    trees: list[DecisionTree] = []
    losses = np.zeros(params.n_iterations)
    plain = params.subsample_fraction == 1.0 and params.colsample_fraction == 1.0
    full_sort_idx = np.argsort(X, axis=0, kind="stable").T if plain else None

    for it in range(params.n_iterations):
        resid = y - pred
        if plain:
            tree = grow_tree(X, resid, params.max_depth, params.min_leaf, full_sort_idx)
        else:
            if params.subsample_fraction < 1.0:
                m = max(2 * params.min_leaf, int(round(n * params.subsample_fraction)))
                rows = np.sort(rng.choice(n, size=min(m, n), replace=False))
            else:
                rows = np.arange(n)
            if params.colsample_fraction < 1.0:
                k = max(1, int(round(p * params.colsample_fraction)))
                cols = np.sort(rng.choice(p, size=k, replace=False))
            else:
                cols = np.arange(p)
            sub = grow_tree(
                X[np.ix_(rows, cols)], resid[rows], params.max_depth, params.min_leaf
            )
            tree = _remap_tree_features(sub, cols)
        trees.append(tree)
        pred = pred + params.learning_rate * tree.predict(X)
        losses[it] = float(np.mean((y - pred) ** 2))

    return TreeEnsemble(
        base_prediction=base,
        trees=trees,
        learning_rate=params.learning_rate,
        kind="gbr",
        n_features=p,
        train_loss=losses,
    )
