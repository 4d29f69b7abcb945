"""Missing-cell imputation: nearest-neighbor voting for discrete
columns, chained-equations regression for continuous ones.

Both imputers leave observed cells untouched and record provenance in
the table's ``imputed`` flags, so downstream reports can distinguish
measured values from filled ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tabular import Table


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    distance: str = "gower_mixed"
    tie_break: str = "lowest_row_index"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.distance != "gower_mixed":
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.tie_break != "lowest_row_index":
            raise ValueError(f"unknown tie_break {self.tie_break!r}")

    def to_dict(self) -> dict:
        return {"k": self.k, "distance": self.distance, "tie_break": self.tie_break}


@dataclass(frozen=True)
class MiceConfig:
    n_iterations: int = 10
    n_imputations: int = 5
    conditional_model: str = "predictive_mean_matching"
    pmm_donors: int = 5
    seed: int = 0
    ridge_penalty: float = 1e-6

    def __post_init__(self) -> None:
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.n_imputations < 1:
            raise ValueError("n_imputations must be >= 1")
        if self.pmm_donors < 1:
            raise ValueError("pmm_donors must be >= 1")
        if self.conditional_model not in ("predictive_mean_matching", "ridge_linear"):
            raise ValueError(f"unknown conditional_model {self.conditional_model!r}")
        if self.ridge_penalty <= 0:
            raise ValueError("ridge_penalty must be positive")

    def to_dict(self) -> dict:
        return {
            "n_iterations": self.n_iterations,
            "n_imputations": self.n_imputations,
            "conditional_model": self.conditional_model,
            "pmm_donors": self.pmm_donors,
            "seed": self.seed,
            "ridge_penalty": self.ridge_penalty,
        }


def gower_distances(table: Table) -> np.ndarray:
    """Pairwise Gower distance over mutually observed cells.

    Continuous columns contribute range-normalized absolute
    differences, discrete columns a 0/1 mismatch.  Pairs sharing no
    observed column get +inf.  Excluded-role columns do not
    participate.
    """
    n = table.n_rows
    total = np.zeros((n, n))
    count = np.zeros((n, n))
    for j, meta in enumerate(table.meta):
        if meta.role == "excluded":
            continue
        col = table.values[:, j]
        obs = table.mask[:, j]
        if not obs.any():
            continue
        both = np.logical_and.outer(obs, obs)
        x = np.where(obs, col, 0.0)
        if meta.kind == "continuous":
            rng = float(np.max(col[obs]) - np.min(col[obs]))
            if rng == 0.0:
                contrib = np.zeros((n, n))
            else:
                contrib = np.abs(x[:, None] - x[None, :]) / rng
        else:
            contrib = (x[:, None] != x[None, :]).astype(float)
        total += np.where(both, contrib, 0.0)
        count += both
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = total / count
    dist[count == 0] = np.inf
    np.fill_diagonal(dist, np.inf)  # a row is never its own neighbor
    return dist


def knn_impute(table: Table, config: KnnConfig, target_columns: set[str]) -> Table:
    """Fill missing cells from the k nearest rows under Gower distance.

    Discrete targets take the neighbors' modal value (mode ties go to
    the lowest category code); continuous targets take the neighbor
    mean.  Distance ties prefer the lower row index.
    """
    if config.k > table.n_rows - 1:
        raise ValueError(f"k={config.k} out of range for {table.n_rows} rows")
    for name in sorted(target_columns):
        _, obs = table.column(name)
        if not obs.any():
            raise ValueError(f"column {name!r} is entirely missing")
    dist = gower_distances(table)
    result = table
    for name in sorted(target_columns, key=table.col_index):
        j = result.col_index(name)
        col = result.values[:, j]
        obs = result.mask[:, j]
        rows_missing = np.flatnonzero(~obs)
        if rows_missing.size == 0:
            continue
        donors = np.flatnonzero(obs)
        fills = np.empty(rows_missing.size)
        kind = result.meta[j].kind
        for i, row in enumerate(rows_missing):
            d = dist[row, donors]
            order = np.argsort(d, kind="stable")  # stable: index breaks ties
            near = donors[order[: config.k]]
            vals = col[near]
            if kind == "continuous":
                fills[i] = float(np.mean(vals))
            else:
                codes, counts = np.unique(vals, return_counts=True)
                fills[i] = float(codes[np.argmax(counts)])  # first max: lowest code
        result = result.with_cells(j, rows_missing, fills)
    return result


def mice_impute(table: Table, config: MiceConfig, target_columns: set[str]) -> list[Table]:
    """Chained-equations imputation of continuous columns.

    Missing cells start at column means; each sweep visits target
    columns in descending-missingness order, regresses the observed
    cells on every other column (ridge-stabilized), and refills the
    missing cells from the conditional model: predictive mean matching
    samples among the closest donors by predicted value, ridge_linear
    adds Gaussian noise at the residual sd.  Emits ``n_imputations``
    independent chains, deterministic for a fixed seed.

    The Gram matrix of the design is maintained incrementally across
    column refills, which keeps wide tables tractable.
    """
    targets = sorted(target_columns, key=table.col_index)
    for name in targets:
        j = table.col_index(name)
        if table.meta[j].kind != "continuous":
            raise ValueError(f"MICE target {name!r} must be continuous")
        if table.meta[j].role == "excluded":
            raise ValueError(f"MICE target {name!r} has excluded role")
        if int(table.mask[:, j].sum()) < 2:
            raise ValueError(f"column {name!r} needs at least 2 observed values")

    design_cols = [j for j, m in enumerate(table.meta) if m.role != "excluded"]
    pos_of = {c: i for i, c in enumerate(design_cols)}
    target_idx = [table.col_index(name) for name in targets]
    # visit order: descending missingness, column order on ties
    miss_count = [(-int((~table.mask[:, j]).sum()), j) for j in target_idx]
    visit = [j for _, j in sorted(miss_count)]

    mask = table.mask
    col_means = np.array(
        [
            table.values[mask[:, j], j].mean() if mask[:, j].any() else 0.0
            for j in range(table.n_cols)
        ]
    )

    seeds = np.random.SeedSequence(config.seed).spawn(config.n_imputations)
    out: list[Table] = []
    for chain_seq in seeds:
        rng = np.random.default_rng(chain_seq)
        values = table.values.copy()
        values[~mask] = np.take(col_means, np.nonzero(~mask)[1])
        W = values[:, design_cols]  # working design, refreshed in place
        gram = W.T @ W
        col_sums = W.sum(axis=0)
        for _ in range(config.n_iterations):
            for j in visit:
                obs = mask[:, j]
                mis = ~obs
                if not mis.any():
                    continue
                jp = pos_of[j]
                W_mis = W[mis]
                n_obs = int(obs.sum())
                g_obs = gram - W_mis.T @ W_mis
                s_obs = col_sums - W_mis.sum(axis=0)
                gc = g_obs - np.outer(s_obs, s_obs) / n_obs
                others = np.array([i for i in range(len(design_cols)) if i != jp])
                y_obs = W[obs, jp]
                if others.size:
                    A = gc[np.ix_(others, others)]
                    A[np.diag_indices_from(A)] += config.ridge_penalty
                    beta = np.linalg.solve(A, gc[others, jp])
                    x_mean = s_obs[others] / n_obs
                    intercept = s_obs[jp] / n_obs - float(x_mean @ beta)
                    pred_mis = W_mis[:, others] @ beta + intercept
                    pred_obs = W[np.ix_(obs.nonzero()[0], others)] @ beta + intercept
                else:
                    intercept = s_obs[jp] / n_obs
                    pred_mis = np.full(int(mis.sum()), intercept)
                    pred_obs = np.full(n_obs, intercept)
                if config.conditional_model == "predictive_mean_matching":
                    new_vals = _pmm_draw(pred_obs, y_obs, pred_mis, config.pmm_donors, rng)
                else:
                    resid_sd = float(np.std(y_obs - pred_obs, ddof=0))
                    new_vals = pred_mis + rng.normal(0.0, resid_sd, size=pred_mis.size)
                W[mis, jp] = new_vals
                values[mis, j] = new_vals
                cross = W.T @ W[:, jp]
                gram[jp, :] = cross
                gram[:, jp] = cross
                col_sums[jp] = W[:, jp].sum()
        completed = table
        for j in visit:
            rows = np.flatnonzero(~mask[:, j])
            if rows.size:
                completed = completed.with_cells(j, rows, values[rows, j])
        out.append(completed)
    return out


def _pmm_draw(
    pred_obs: np.ndarray,
    y_obs: np.ndarray,
    pred_mis: np.ndarray,
    n_donors: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """For each missing cell, sample among the observed donors whose
    predicted values are closest to the cell's prediction."""
    k = min(n_donors, y_obs.size)
    gaps = np.abs(pred_obs[None, :] - pred_mis[:, None])
    donor_idx = np.argpartition(gaps, k - 1, axis=1)[:, :k]
    # argpartition order is unspecified; sort for determinism
    row_gaps = np.take_along_axis(gaps, donor_idx, axis=1)
    order = np.argsort(row_gaps, axis=1, kind="stable")
    donor_idx = np.take_along_axis(donor_idx, order, axis=1)
    pick = rng.integers(0, k, size=pred_mis.size)
    return y_obs[donor_idx[np.arange(pred_mis.size), pick]]


def pool_imputations(tables: list[Table], strategy: str = "mean") -> Table:
    """Cell-wise mean over imputed cells; observed cells verbatim."""
    if strategy != "mean":
        raise ValueError(f"unknown pooling strategy {strategy!r}")
    if not tables:
        raise ValueError("need at least one imputed table")
    first = tables[0]
    for t in tables[1:]:
        if t.values.shape != first.values.shape:
            raise ValueError("imputed tables must share shape")
        if not np.array_equal(t.imputed, first.imputed) or not np.array_equal(
            t.mask, first.mask
        ):
            raise ValueError("imputed tables must share masks of origin")
    if len(tables) == 1:
        return first
    filled = first.imputed
    stacked = np.stack([t.values for t in tables])
    mean_vals = np.where(filled, np.nanmean(stacked, axis=0), first.values)
    return Table(mean_vals, first.mask, first.meta, first.categories, first.imputed)


def mean_impute(table: Table, target_columns: set[str]) -> Table:
    """Column-mean fill, the naive baseline the chained approach is
    measured against."""
    result = table
    for name in sorted(target_columns, key=table.col_index):
        j = result.col_index(name)
        obs = result.mask[:, j]
        rows = np.flatnonzero(~obs)
        if rows.size == 0:
            continue
        if not obs.any():
            raise ValueError(f"column {name!r} is entirely missing")
        fill = float(result.values[obs, j].mean())
        result = result.with_cells(j, rows, np.full(rows.size, fill))
    return result
