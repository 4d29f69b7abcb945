"""Columnar data model with explicit missingness, CSV ingestion, staged
column filtering, and train/test splitting.

A :class:`Table` stores every column as float64 in a single ``(n_rows,
n_cols)`` array together with a boolean mask (``True`` where a value is
present) and per-column metadata.  Discrete columns hold non-negative
integer category codes; continuous columns hold finite reals where
observed.  Tables are immutable: every operation returns a new value.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KINDS = ("continuous", "ordinal", "nominal")
STAGES = ("prenatal", "delivery", "postnatal")
LINEAGES = ("maternal", "paternal", "offspring", "other")
ROLES = ("feature", "target", "excluded")

DEFAULT_MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "NULL", "null"})


class SchemaError(ValueError):
    """Raised when a file does not match the declared column schema."""


class FilterError(ValueError):
    """Raised when a filter plan cannot be applied."""


@dataclass(frozen=True)
class ColumnMeta:
    """Metadata for one column: measurement kind, collection stage,
    lineage, modeling role, and the observed missing fraction."""

    name: str
    kind: str = "continuous"
    stage: str = "prenatal"
    lineage: str = "other"
    role: str = "feature"
    missing_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r} for column {self.name!r}")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r} for column {self.name!r}")
        if self.lineage not in LINEAGES:
            raise ValueError(f"unknown lineage {self.lineage!r} for column {self.name!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r} for column {self.name!r}")
        if not 0.0 <= self.missing_fraction <= 1.0:
            raise ValueError(f"missing_fraction out of [0,1] for column {self.name!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "stage": self.stage,
            "lineage": self.lineage,
            "role": self.role,
            "missing_fraction": self.missing_fraction,
        }

    @staticmethod
    def from_dict(d: dict) -> "ColumnMeta":
        return ColumnMeta(
            name=d["name"],
            kind=d.get("kind", "continuous"),
            stage=d.get("stage", "prenatal"),
            lineage=d.get("lineage", "other"),
            role=d.get("role", "feature"),
            missing_fraction=float(d.get("missing_fraction", 0.0)),
        )


class Table:
    """Immutable columnar dataset.

    Parameters
    ----------
    values : (n_rows, n_cols) float array
        Cell values; content at unobserved cells is NaN.
    mask : (n_rows, n_cols) bool array
        True where the cell holds a usable value.
    meta : sequence of ColumnMeta
        One entry per column, names unique.
    categories : dict, optional
        Original labels for nominal columns, ``name -> tuple of labels``
        indexed by category code.
    imputed : (n_rows, n_cols) bool array, optional
        Provenance: True where the value was produced by imputation
        rather than observed.  Imputed cells also have ``mask`` True.
    """

    __slots__ = ("values", "mask", "meta", "categories", "imputed")

    def __init__(
        self,
        values: np.ndarray,
        mask: np.ndarray,
        meta: Sequence[ColumnMeta],
        categories: dict[str, tuple[str, ...]] | None = None,
        imputed: np.ndarray | None = None,
    ) -> None:
        values = np.asarray(values, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if values.ndim != 2:
            raise ValueError("values must be 2-dimensional")
        if mask.shape != values.shape:
            raise ValueError("mask shape must equal values shape")
        meta = tuple(meta)
        if len(meta) != values.shape[1]:
            raise ValueError("meta length must equal column count")
        names = [m.name for m in meta]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate column names: {dupes}")
        if imputed is None:
            imputed = np.zeros_like(mask)
        else:
            imputed = np.asarray(imputed, dtype=bool)
            if imputed.shape != values.shape:
                raise ValueError("imputed shape must equal values shape")
        for j, m in enumerate(meta):
            observed = mask[:, j]
            col = values[observed, j]
            if m.kind == "continuous":
                if not np.all(np.isfinite(col)):
                    raise ValueError(f"non-finite observed value in continuous column {m.name!r}")
            else:
                if col.size and (np.any(col < 0) or np.any(col != np.floor(col))):
                    raise ValueError(
                        f"{m.kind} column {m.name!r} must hold non-negative integer codes"
                    )
        values = values.copy()
        values[~mask] = np.nan
        for arr in (values, mask, imputed):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "meta", meta)
        object.__setattr__(self, "categories", dict(categories or {}))
        object.__setattr__(self, "imputed", imputed)

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("Table is immutable")

    # -- basic accessors -------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.meta)

    def col_index(self, name: str) -> int:
        for j, m in enumerate(self.meta):
            if m.name == name:
                return j
        raise KeyError(f"no column named {name!r}")

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Return (values, mask) vectors for one column."""
        j = self.col_index(name)
        return self.values[:, j], self.mask[:, j]

    def target_index(self) -> int:
        idx = [j for j, m in enumerate(self.meta) if m.role == "target"]
        if len(idx) != 1:
            raise ValueError(f"expected exactly one target column, found {len(idx)}")
        return idx[0]

    @property
    def target_name(self) -> str:
        return self.meta[self.target_index()].name

    def feature_indices(self) -> list[int]:
        return [j for j, m in enumerate(self.meta) if m.role == "feature"]

    def feature_names(self) -> list[str]:
        return [self.meta[j].name for j in self.feature_indices()]

    def feature_matrix(self) -> np.ndarray:
        """Feature columns as a dense matrix (NaN at unobserved cells)."""
        return self.values[:, self.feature_indices()]

    def target_vector(self) -> tuple[np.ndarray, np.ndarray]:
        j = self.target_index()
        return self.values[:, j], self.mask[:, j]

    # -- structural transforms -------------------------------------------

    def select_columns(self, indices: Iterable[int]) -> "Table":
        idx = list(indices)
        meta = [self.meta[j] for j in idx]
        cats = {m.name: self.categories[m.name] for m in meta if m.name in self.categories}
        return Table(self.values[:, idx], self.mask[:, idx], meta, cats, self.imputed[:, idx])

    def select_rows(self, rows: np.ndarray) -> "Table":
        return Table(self.values[rows], self.mask[rows], self.meta, self.categories, self.imputed[rows])

    def with_cells(self, col: int, rows: np.ndarray, new_values: np.ndarray) -> "Table":
        """Return a copy with the given cells filled and flagged as imputed."""
        values = self.values.copy()
        mask = self.mask.copy()
        imputed = self.imputed.copy()
        values[rows, col] = new_values
        mask[rows, col] = True
        imputed[rows, col] = True
        return Table(values, mask, self.meta, self.categories, imputed)

    def with_meta(self, meta: Sequence[ColumnMeta]) -> "Table":
        return Table(self.values, self.mask, meta, self.categories, self.imputed)

    def equals(self, other: "Table") -> bool:
        """Bit-exact equality of values, masks, provenance, and metadata."""
        if self.meta != other.meta or self.categories != other.categories:
            return False
        if self.mask.shape != other.mask.shape:
            return False
        same_mask = np.array_equal(self.mask, other.mask) and np.array_equal(
            self.imputed, other.imputed
        )
        if not same_mask:
            return False
        a, b = self.values[self.mask], other.values[other.mask]
        return np.array_equal(a, b)


# -- filter plans ----------------------------------------------------------


@dataclass(frozen=True)
class DropStage:
    stages: frozenset[str]

    def __post_init__(self):
        bad = set(self.stages) - set(STAGES)
        if bad:
            raise ValueError(f"unknown stages in drop_stage: {sorted(bad)}")

    def keeps(self, meta: ColumnMeta) -> bool:
        return meta.stage not in self.stages

    def to_dict(self) -> dict:
        return {"op": "drop_stage", "stages": sorted(self.stages)}


@dataclass(frozen=True)
class MinObserved:
    """Keep columns with observed fraction at least ``threshold``.

    A column passes when its missing fraction is <= 1 - threshold; the
    boundary itself is kept (a column missing exactly 40% survives a 0.6
    threshold).
    """

    threshold: float

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("min_observed threshold must lie in [0, 1]")

    def keeps(self, meta: ColumnMeta) -> bool:
        return meta.missing_fraction <= 1.0 - self.threshold

    def to_dict(self) -> dict:
        return {"op": "min_observed", "threshold": self.threshold}


@dataclass(frozen=True)
class KeepKinds:
    kinds: frozenset[str]

    def __post_init__(self):
        bad = set(self.kinds) - set(KINDS)
        if bad:
            raise ValueError(f"unknown kinds in keep_kinds: {sorted(bad)}")

    def keeps(self, meta: ColumnMeta) -> bool:
        return meta.kind in self.kinds

    def to_dict(self) -> dict:
        return {"op": "keep_kinds", "kinds": sorted(self.kinds)}


@dataclass(frozen=True)
class DropLineage:
    lineages: frozenset[str]

    def __post_init__(self):
        bad = set(self.lineages) - set(LINEAGES)
        if bad:
            raise ValueError(f"unknown lineages in drop_lineage: {sorted(bad)}")

    def keeps(self, meta: ColumnMeta) -> bool:
        return meta.lineage not in self.lineages

    def to_dict(self) -> dict:
        return {"op": "drop_lineage", "lineages": sorted(self.lineages)}


FilterStep = DropStage | MinObserved | KeepKinds | DropLineage


@dataclass(frozen=True)
class FilterPlan:
    """Ordered sequence of column filter steps, applied in listed order."""

    steps: tuple[FilterStep, ...] = ()

    def to_dict(self) -> dict:
        return {"steps": [s.to_dict() for s in self.steps]}

    @staticmethod
    def from_dict(d: dict) -> "FilterPlan":
        steps: list[FilterStep] = []
        for s in d.get("steps", []):
            op = s["op"]
            if op == "drop_stage":
                steps.append(DropStage(frozenset(s["stages"])))
            elif op == "min_observed":
                steps.append(MinObserved(float(s["threshold"])))
            elif op == "keep_kinds":
                steps.append(KeepKinds(frozenset(s["kinds"])))
            elif op == "drop_lineage":
                steps.append(DropLineage(frozenset(s["lineages"])))
            else:
                raise ValueError(f"unknown filter step op {op!r}")
        return FilterPlan(tuple(steps))


@dataclass(frozen=True)
class FilterTrace:
    """Column counts along a plan: initial count first, then the count
    after each step."""

    counts: tuple[int, ...]
    steps: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "steps": list(self.steps)}


# -- operations ------------------------------------------------------------


def load_csv(
    path: str | Path,
    schema: Sequence[ColumnMeta],
    missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
    max_categories: int = 256,
) -> Table:
    """Read an RFC-4180 style CSV into a Table.

    The header must contain exactly the schema's column names (any
    order).  A cell becomes unobserved when it matches a missing token,
    or when it fails numeric parsing in a continuous column.  Nominal
    cells are coded by first appearance; the original labels are kept in
    ``table.categories``.

    Raises
    ------
    SchemaError
        On header/schema mismatch, duplicate header names, or a nominal
        column exceeding ``max_categories`` distinct labels.
    """
    missing = set(missing_tokens)
    if not missing:
        raise ValueError("missing_tokens must be non-empty")
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names in header")
    schema_names = [m.name for m in schema]
    if set(header) != set(schema_names):
        missing_cols = sorted(set(schema_names) - set(header))
        extra = sorted(set(header) - set(schema_names))
        raise SchemaError(
            f"{path}: header does not match schema (missing={missing_cols}, unexpected={extra})"
        )
    col_of = {name: header.index(name) for name in schema_names}

    n_rows = len(rows)
    n_cols = len(schema)
    values = np.full((n_rows, n_cols), np.nan)
    mask = np.zeros((n_rows, n_cols), dtype=bool)
    categories: dict[str, tuple[str, ...]] = {}

    for j, m in enumerate(schema):
        raw = [row[col_of[m.name]] for row in rows]
        if m.kind == "nominal":
            codes: dict[str, int] = {}
            labels: list[str] = []
            for i, cell in enumerate(raw):
                if cell in missing:
                    continue
                if cell not in codes:
                    codes[cell] = len(labels)
                    labels.append(cell)
                    if len(labels) > max_categories:
                        raise SchemaError(
                            f"{path}: nominal column {m.name!r} exceeds {max_categories} categories"
                        )
                values[i, j] = codes[cell]
                mask[i, j] = True
            categories[m.name] = tuple(labels)
        elif m.kind == "ordinal":
            for i, cell in enumerate(raw):
                if cell in missing:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise SchemaError(
                        f"{path}: ordinal column {m.name!r} has non-numeric value {cell!r} at row {i}"
                    ) from None
                if v < 0 or v != math.floor(v):
                    raise SchemaError(
                        f"{path}: ordinal column {m.name!r} needs non-negative integer codes, got {cell!r}"
                    )
                values[i, j] = v
                mask[i, j] = True
        else:
            for i, cell in enumerate(raw):
                if cell in missing:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    continue  # failed parse counts as unobserved
                if not math.isfinite(v):
                    continue
                values[i, j] = v
                mask[i, j] = True

    table = Table(values, mask, schema, categories)
    table, _ = recompute_missingness(table)
    return table


def write_csv(table: Table, path: str | Path, missing_token: str = "") -> None:
    """Write a Table as CSV; round-trips bit-exactly through load_csv
    when paired with the table's schema."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.column_names)
        for i in range(table.n_rows):
            row = []
            for j, m in enumerate(table.meta):
                if not table.mask[i, j]:
                    row.append(missing_token)
                elif m.kind == "nominal" and m.name in table.categories:
                    row.append(table.categories[m.name][int(table.values[i, j])])
                elif m.kind == "continuous":
                    row.append(repr(float(table.values[i, j])))
                else:
                    row.append(str(int(table.values[i, j])))
            writer.writerow(row)


def write_schema(table: Table, path: str | Path) -> None:
    payload = {"columns": [m.to_dict() for m in table.meta]}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def read_schema(path: str | Path) -> list[ColumnMeta]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ColumnMeta.from_dict(d) for d in payload["columns"]]


def recompute_missingness(table: Table) -> tuple[Table, float]:
    """Refresh every column's missing_fraction; also return the
    dataset-level missing percentage (unobserved cells / total cells)."""
    n = table.n_rows
    if n == 0 or table.n_cols == 0:
        return table, 0.0
    missing_per_col = (~table.mask).sum(axis=0) / n
    meta = [replace(m, missing_fraction=float(missing_per_col[j])) for j, m in enumerate(table.meta)]
    overall = float((~table.mask).sum()) / float(table.mask.size)
    return table.with_meta(meta), overall


def apply_filter_plan(table: Table, plan: FilterPlan) -> tuple[Table, FilterTrace]:
    """Apply filter steps in order, never removing the target column.

    Missing fractions are recomputed before each step so thresholds see
    current data.  Raises FilterError when a step would remove the
    target or when no feature columns survive.
    """
    current, _ = recompute_missingness(table)
    counts = [current.n_cols]
    step_names = []
    for step in plan.steps:
        keep = []
        for j, m in enumerate(current.meta):
            if m.role == "target":
                if not step.keeps(m):
                    raise FilterError(
                        f"step {step.to_dict()['op']} would remove target column {m.name!r}"
                    )
                keep.append(j)
            elif step.keeps(m):
                keep.append(j)
        current = current.select_columns(keep)
        current, _ = recompute_missingness(current)
        counts.append(current.n_cols)
        step_names.append(step.to_dict()["op"])
    has_target = any(m.role == "target" for m in current.meta)
    n_features = sum(1 for m in current.meta if m.role == "feature")
    if plan.steps and has_target and n_features == 0:
        raise FilterError("filter plan removed every feature column")
    return current, FilterTrace(tuple(counts), tuple(step_names))


def split(table: Table, test_fraction: float, seed: int) -> tuple[Table, Table]:
    """Deterministic disjoint row split; test size = round(n * fraction)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = table.n_rows
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    n_test = int(math.floor(n * test_fraction + 0.5))
    if n_test == 0 or n_test == n:
        raise ValueError(
            f"test_fraction {test_fraction} yields an empty partition for {n} rows"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return table.select_rows(train_rows), table.select_rows(test_rows)
