"""Descriptive statistics, normality classification, and WHO
birth-weight categories used during exploratory analysis."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tabular import Table, recompute_missingness

# Documented conventions, not externally mandated values.
DEFAULT_SKEW_TOL = 0.5
DEFAULT_KURT_TOL = 1.0


@dataclass(frozen=True)
class SummaryStats:
    """Moment summary of one continuous column's observed cells.

    ``sd`` is the sample standard deviation (n-1 denominator);
    ``skewness`` is the adjusted Fisher-Pearson coefficient;
    ``excess_kurtosis`` is bias-corrected and NaN for n < 4 where the
    correction is undefined.
    """

    n_observed: int
    mean: float
    sd: float
    skewness: float
    excess_kurtosis: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return {
            "n_observed": self.n_observed,
            "mean": self.mean,
            "sd": self.sd,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "min": self.min,
            "max": self.max,
        }


class WeightClass(enum.Enum):
    VERY_LOW = "very_low"
    MODERATELY_LOW = "moderately_low"
    NORMAL = "normal"
    HIGH = "high"


def summarize(values: np.ndarray, mask: np.ndarray | None = None) -> SummaryStats:
    """Summary statistics over the observed cells of a continuous column."""
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.isfinite(values)
    x = values[np.asarray(mask, dtype=bool)]
    n = x.size
    if n == 0:
        raise ValueError("cannot summarize a column with no observed values")
    mean = float(np.mean(x))
    if n >= 2:
        sd = float(np.std(x, ddof=1))
    else:
        sd = 0.0
    skew = _adjusted_skewness(x, mean, sd)
    kurt = _excess_kurtosis(x, mean, sd)
    return SummaryStats(
        n_observed=int(n),
        mean=mean,
        sd=sd,
        skewness=skew,
        excess_kurtosis=kurt,
        min=float(np.min(x)),
        max=float(np.max(x)),
    )


def _adjusted_skewness(x: np.ndarray, mean: float, sd: float) -> float:
    n = x.size
    if n < 3 or sd == 0.0:
        return 0.0
    m3 = np.mean((x - mean) ** 3)
    s = np.sqrt(np.mean((x - mean) ** 2))
    g1 = m3 / s**3
    return float(np.sqrt(n * (n - 1)) / (n - 2) * g1)


def _excess_kurtosis(x: np.ndarray, mean: float, sd: float) -> float:
    n = x.size
    if n < 4 or sd == 0.0:
        return float("nan")
    m2 = np.mean((x - mean) ** 2)
    m4 = np.mean((x - mean) ** 4)
    g2 = m4 / m2**2 - 3.0
    return float((n - 1) / ((n - 2) * (n - 3)) * ((n + 1) * g2 + 6.0))


def classify_normality(
    stats: SummaryStats,
    skew_tol: float = DEFAULT_SKEW_TOL,
    kurt_tol: float = DEFAULT_KURT_TOL,
) -> str:
    """'normal' iff both |skewness| and |excess kurtosis| fall within
    their tolerances."""
    if abs(stats.skewness) <= skew_tol and abs(stats.excess_kurtosis) <= kurt_tol:
        return "normal"
    return "non_normal"


def who_bw_class(weight_g: float) -> WeightClass:
    """WHO-aligned birth-weight class; 1500 and 2500 belong to the
    higher class and 4000 to normal."""
    if not weight_g > 0:
        raise ValueError("weight must be positive")
    if weight_g < 1500:
        return WeightClass.VERY_LOW
    if weight_g < 2500:
        return WeightClass.MODERATELY_LOW
    if weight_g <= 4000:
        return WeightClass.NORMAL
    return WeightClass.HIGH


@dataclass(frozen=True)
class ColumnProfile:
    name: str
    kind: str
    stats: SummaryStats | None = None
    frequencies: dict[int, int] | None = None
    normality: str | None = None
    zero_variance: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "stats": self.stats.to_dict() if self.stats else None,
            "frequencies": (
                {str(k): v for k, v in self.frequencies.items()} if self.frequencies else None
            ),
            "normality": self.normality,
            "zero_variance": self.zero_variance,
        }


@dataclass(frozen=True)
class ProfileReport:
    columns: tuple[ColumnProfile, ...]
    n_rows: int
    n_continuous: int
    n_discrete: int
    n_normal: int
    n_non_normal: int
    dataset_missingness: float

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_continuous": self.n_continuous,
            "n_discrete": self.n_discrete,
            "n_normal": self.n_normal,
            "n_non_normal": self.n_non_normal,
            "dataset_missingness": self.dataset_missingness,
            "columns": [c.to_dict() for c in self.columns],
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )


def profile_table(
    table: Table,
    skew_tol: float = DEFAULT_SKEW_TOL,
    kurt_tol: float = DEFAULT_KURT_TOL,
) -> ProfileReport:
    """Per-column summary: moment stats and a normality verdict for
    continuous columns, category frequency tables for discrete ones."""
    _, overall_missing = recompute_missingness(table)
    profiles: list[ColumnProfile] = []
    n_cont = n_disc = n_norm = n_non = 0
    for j, m in enumerate(table.meta):
        if m.role == "excluded":
            continue
        vals = table.values[:, j]
        msk = table.mask[:, j]
        if m.kind == "continuous":
            n_cont += 1
            if msk.any():
                stats = summarize(vals, msk)
                zero_var = stats.sd == 0.0
                verdict = None
                if stats.n_observed >= 4 and not zero_var:
                    verdict = classify_normality(stats, skew_tol, kurt_tol)
                    if verdict == "normal":
                        n_norm += 1
                    else:
                        n_non += 1
                profiles.append(
                    ColumnProfile(m.name, m.kind, stats=stats, normality=verdict, zero_variance=zero_var)
                )
            else:
                profiles.append(ColumnProfile(m.name, m.kind, zero_variance=True))
        else:
            n_disc += 1
            observed = vals[msk].astype(int)
            codes, counts = np.unique(observed, return_counts=True)
            freq = {int(c): int(k) for c, k in zip(codes, counts)}
            profiles.append(
                ColumnProfile(m.name, m.kind, frequencies=freq, zero_variance=len(freq) <= 1)
            )
    return ProfileReport(
        columns=tuple(profiles),
        n_rows=table.n_rows,
        n_continuous=n_cont,
        n_discrete=n_disc,
        n_normal=n_norm,
        n_non_normal=n_non,
        dataset_missingness=overall_missing,
    )


def histogram_data(values: np.ndarray, mask: np.ndarray | None = None, n_bins: int = 20):
    """Bin edges and counts for one column, for CSV emission."""
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.isfinite(values)
    x = values[np.asarray(mask, dtype=bool)]
    counts, edges = np.histogram(x, bins=n_bins)
    return edges, counts
