"""Binary regression trees stored as flat node arrays.

Nodes are indexed 0..n_nodes-1 with the root at 0.  Internal nodes
carry a split feature, a threshold (x <= threshold goes left), and
child indices; leaves carry feature = -1.  Every node records its
training cover (row count) and mean response, which downstream
attribution needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DecisionTree:
    feature: np.ndarray  # int, -1 at leaves
    threshold: np.ndarray  # float, NaN at leaves
    left: np.ndarray  # int, -1 at leaves
    right: np.ndarray  # int, -1 at leaves
    value: np.ndarray  # float, node mean response (prediction at leaves)
    cover: np.ndarray  # float, training rows through the node
    gain: np.ndarray  # float, split gain (sum-of-squares reduction), 0 at leaves

    def __post_init__(self) -> None:
        n = len(self.feature)
        for name in ("threshold", "left", "right", "value", "cover", "gain"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"node array {name!r} length mismatch")

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            rows = np.flatnonzero(active)
            f = feat[rows]
            go_left = X[rows, f] <= self.threshold[node[rows]]
            nxt = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
            node[rows] = nxt
        return self.value[node]

    def predict_row(self, x: np.ndarray) -> float:
        """Scalar root-to-leaf traversal (reference path for tests)."""
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return float(self.value[node])

    def expected_value(self) -> float:
        """Cover-weighted mean prediction (value at the root)."""
        return float(self.value[0])

    def feature_gain(self, n_features: int) -> np.ndarray:
        out = np.zeros(n_features)
        internal = self.feature >= 0
        np.add.at(out, self.feature[internal], self.gain[internal])
        return out

    def to_dict(self) -> dict:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": [None if np.isnan(v) else float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "value": [float(v) for v in self.value],
            "cover": [float(v) for v in self.cover],
            "gain": [float(v) for v in self.gain],
        }

    @staticmethod
    def from_dict(d: dict) -> "DecisionTree":
        thr = np.array([np.nan if v is None else v for v in d["threshold"]], dtype=float)
        return DecisionTree(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=thr,
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
            cover=np.asarray(d["cover"], dtype=float),
            gain=np.asarray(d["gain"], dtype=float),
        )

    @staticmethod
    def single_leaf(value: float, cover: float) -> "DecisionTree":
        return DecisionTree(
            feature=np.array([-1], dtype=np.int64),
            threshold=np.array([np.nan]),
            left=np.array([-1], dtype=np.int64),
            right=np.array([-1], dtype=np.int64),
            value=np.array([float(value)]),
            cover=np.array([float(cover)]),
            gain=np.array([0.0]),
        )


def _best_split_all_features(
    Xs_node: np.ndarray, rs_node: np.ndarray, min_leaf: int
) -> tuple[int, float, float] | None:
    """Exhaustive threshold scan over every feature at once.

    Xs_node, rs_node: (p, nn) per-feature value-sorted node data.
    Returns (feature, threshold, gain) for the best sum-of-squares
    reduction, or None when no valid split exists.  Ties resolve to the
    lowest feature index, then the lowest threshold.
    """
    p, nn = Xs_node.shape
    if nn < 2 * min_leaf:
        return None
    csum = np.cumsum(rs_node, axis=1)
    total = csum[:, -1:]
    left_cnt = np.arange(1, nn + 1, dtype=float)[None, :]
    right_cnt = nn - left_cnt
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = csum**2 / left_cnt + (total - csum) ** 2 / right_cnt - total**2 / nn
    # split after position i is valid when the value strictly increases
    # and both children meet min_leaf
    boundary = np.zeros((p, nn), dtype=bool)
    boundary[:, :-1] = Xs_node[:, 1:] > Xs_node[:, :-1]
    k = np.arange(1, nn + 1)
    size_ok = (k >= min_leaf) & (nn - k >= min_leaf)
    valid = boundary & size_ok[None, :]
    if not valid.any():
        return None
    gains = np.where(valid, gains, -np.inf)
    flat = int(np.argmax(gains))  # first max in row-major order: lowest
    f, i = divmod(flat, nn)  # feature index, then lowest threshold
    gain = float(gains[f, i])
    if not np.isfinite(gain) or gain <= 0.0:
        return None
    a = Xs_node[f, i]
    b = Xs_node[f, i + 1]
    thr = a + (b - a) / 2.0
    if thr >= b:  # degenerate rounding for adjacent floats
        thr = a
    return int(f), float(thr), gain


def grow_tree(
    X: np.ndarray,
    r: np.ndarray,
    max_depth: int,
    min_leaf: int,
    sort_idx: np.ndarray | None = None,
) -> DecisionTree:
    """Greedy least-squares tree on residuals ``r``.

    sort_idx: optional (p, n) per-feature argsort of X, reusable across
    calls on the same X.
    """
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    n, p = X.shape
    if sort_idx is None:
        sort_idx = np.argsort(X, axis=0, kind="stable").T
    Xs = np.take_along_axis(X.T, sort_idx, axis=1)  # (p, n) sorted values
    rs_all = r[sort_idx]  # (p, n) residuals in per-feature sorted order

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    cover: list[float] = []
    gain: list[float] = []

    def new_node(rows: np.ndarray) -> int:
        nid = len(feature)
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(r[rows])))
        cover.append(float(rows.size))
        gain.append(0.0)
        return nid

    root_rows = np.arange(n)
    root = new_node(root_rows)
    stack = [(root, root_rows, 0)]
    while stack:
        nid, rows, depth = stack.pop()
        if depth >= max_depth or rows.size < 2 * min_leaf:
            continue
        mask = np.zeros(n, dtype=bool)
        mask[rows] = True
        in_node = mask[sort_idx]
        nn = rows.size
        Xs_node = Xs[in_node].reshape(p, nn)
        rs_node = rs_all[in_node].reshape(p, nn)
        best = _best_split_all_features(Xs_node, rs_node, min_leaf)
        if best is None:
            continue
        f, thr, g = best
        go_left = X[rows, f] <= thr
        rows_l = rows[go_left]
        rows_r = rows[~go_left]
        lid = new_node(rows_l)
        rid = new_node(rows_r)
        feature[nid] = f
        threshold[nid] = thr
        left[nid] = lid
        right[nid] = rid
        gain[nid] = g
        stack.append((rid, rows_r, depth + 1))
        stack.append((lid, rows_l, depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
        cover=np.asarray(cover, dtype=float),
        gain=np.asarray(gain, dtype=float),
    )
