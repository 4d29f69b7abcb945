"""Deterministic synthetic cohort generator.

Stands in for the private study data: plants known signal features,
decoys, mixed column types, staged tags, and configurable missingness,
and keeps the pre-noise / pre-masking ground truth so tests can score
imputation, selection, and model quality against an oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tabular import ColumnMeta, DropStage, FilterPlan, KeepKinds, MinObserved, Table


@dataclass(frozen=True)
class EffectSpec:
    """Additive contribution of one feature to the target, in grams.

    The raw column value is standardized by the column's (loc, scale)
    before the shape function applies, so effect sizes stay in grams
    whatever the column units are.

    kinds: linear (scale * z), threshold (scale past z > param),
    interaction (scale * z * z_partner), nonmonotone (gaussian bump
    centered at param).
    """

    feature: str
    kind: str
    scale: float
    param: float = 0.0
    partner: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "threshold", "interaction", "nonmonotone"):
            raise ValueError(f"unknown effect kind {self.kind!r}")
        if self.kind == "interaction" and not self.partner:
            raise ValueError("interaction effect needs a partner feature")

    def apply(self, z: np.ndarray, z_partner: np.ndarray | None = None) -> np.ndarray:
        if self.kind == "linear":
            return self.scale * z
        if self.kind == "threshold":
            return self.scale * (z > self.param).astype(float)
        if self.kind == "nonmonotone":
            return self.scale * np.exp(-0.5 * (z - self.param) ** 2)
        if z_partner is None:
            raise ValueError("interaction effect needs partner values")
        return self.scale * z * z_partner

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "kind": self.kind,
            "scale": self.scale,
            "param": self.param,
            "partner": self.partner,
        }


@dataclass(frozen=True)
class PlantedColumn:
    """Layout of one generated feature column."""

    name: str
    kind: str = "continuous"
    stage: str = "prenatal"
    lineage: str = "other"
    loc: float = 0.0
    scale: float = 1.0
    n_categories: int = 5
    missing_rate: float = 0.0
    depends_on: tuple[str, ...] = ()
    dependence: float = 0.0  # shared-variance fraction with parents

    def __post_init__(self) -> None:
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError(f"missing_rate must lie in [0,1) for {self.name!r}")
        if self.kind not in ("continuous", "ordinal", "nominal"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if not 0.0 <= self.dependence < 1.0:
            raise ValueError("dependence must lie in [0, 1)")


@dataclass(frozen=True)
class CohortSpec:
    n_rows: int
    columns: tuple[PlantedColumn, ...]
    effects: tuple[EffectSpec, ...]
    noise_sd: float
    target_name: str = "target"
    target_mean: float = 0.0
    target_stage: str = "delivery"
    target_lineage: str = "offspring"
    target_clip_min: float | None = None
    missing_mechanism: str = "mcar"
    mar_driver: str | None = None
    mar_slope: float = 1.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_rows < 1:
            raise ValueError("n_rows must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate planted column names")
        if self.target_name in names:
            raise ValueError("target name collides with a feature column")
        known = set(names)
        for e in self.effects:
            if e.feature not in known:
                raise ValueError(f"effect references unknown feature {e.feature!r}")
            if e.partner and e.partner not in known:
                raise ValueError(f"effect references unknown partner {e.partner!r}")
        if self.missing_mechanism not in ("mcar", "mar"):
            raise ValueError(f"unknown missing mechanism {self.missing_mechanism!r}")
        if self.missing_mechanism == "mar":
            if not self.mar_driver or self.mar_driver not in known:
                raise ValueError("MAR mechanism needs an existing driver column")
            driver = next(c for c in self.columns if c.name == self.mar_driver)
            if driver.missing_rate > 0:
                raise ValueError("MAR driver column must be fully observed")


@dataclass
class GroundTruth:
    """Everything the generator knew: pre-noise target, pre-masking
    cell values, the signal set, and the effect functions."""

    true_target: np.ndarray
    true_values: np.ndarray
    column_names: tuple[str, ...]
    signal_features: tuple[str, ...]
    effects: tuple[EffectSpec, ...]
    noise_sd: float
    target_mean: float

    def column(self, name: str) -> np.ndarray:
        return self.true_values[:, self.column_names.index(name)]

    def effect_curve(self, feature: str, raw_grid: np.ndarray, loc: float, scale: float) -> np.ndarray:
        """Ground-truth additive contribution of one feature along a raw
        value grid (interaction effects evaluate at partner mean 0)."""
        z = (np.asarray(raw_grid, dtype=float) - loc) / scale
        total = np.zeros_like(z)
        for e in self.effects:
            if e.feature != feature:
                continue
            if e.kind == "interaction":
                total += e.apply(z, np.zeros_like(z))
            else:
                total += e.apply(z)
        return total

    def to_dict(self) -> dict:
        return {
            "signal_features": list(self.signal_features),
            "effects": [e.to_dict() for e in self.effects],
            "noise_sd": self.noise_sd,
            "target_mean": self.target_mean,
            "true_target": self.true_target.tolist(),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")


def generate(spec: CohortSpec) -> tuple[Table, GroundTruth]:
    """Build the cohort: deterministic for a fixed spec.

    Column value streams come from per-column seeds spawned off the
    master seed, so results do not depend on generation order or
    worker scheduling.
    """
    n = spec.n_rows
    cols = spec.columns
    p = len(cols)
    root = np.random.SeedSequence(spec.seed)
    # children: one per column, then noise, then masking
    children = root.spawn(p + 2)

    z_by_name: dict[str, np.ndarray] = {}
    values = np.empty((n, p + 1))
    metas: list[ColumnMeta] = []

    # base z-scores first so dependent columns can mix their parents
    base_z = {}
    for i, c in enumerate(cols):
        rng = np.random.default_rng(children[i])
        if c.kind == "continuous":
            base_z[c.name] = rng.standard_normal(n)
        else:
            base_z[c.name] = rng.integers(0, c.n_categories, size=n).astype(float)

    for i, c in enumerate(cols):
        if c.kind == "continuous":
            z = base_z[c.name]
            if c.depends_on:
                combo = np.sum([_as_z(base_z[pn], cols, pn) for pn in c.depends_on], axis=0)
                combo /= math.sqrt(len(c.depends_on))
                z = math.sqrt(c.dependence) * combo + math.sqrt(1.0 - c.dependence) * z
            z_by_name[c.name] = z
            values[:, i] = c.loc + c.scale * z
        else:
            codes = base_z[c.name]
            z_by_name[c.name] = codes
            values[:, i] = codes
        metas.append(
            ColumnMeta(name=c.name, kind=c.kind, stage=c.stage, lineage=c.lineage, role="feature")
        )

    # target = mean + sum of planted effects + gaussian noise
    signal = np.full(n, spec.target_mean)
    for e in spec.effects:
        z = z_by_name[e.feature]
        zp = z_by_name[e.partner] if e.partner else None
        signal = signal + e.apply(z, zp)
    noise_rng = np.random.default_rng(children[p])
    target = signal + noise_rng.normal(0.0, spec.noise_sd, size=n)
    if spec.target_clip_min is not None:
        target = np.maximum(target, spec.target_clip_min)
    values[:, p] = target
    metas.append(
        ColumnMeta(
            name=spec.target_name,
            kind="continuous",
            stage=spec.target_stage,
            lineage=spec.target_lineage,
            role="target",
        )
    )

    mask = _draw_mask(spec, values, children[p + 1])
    truth = GroundTruth(
        true_target=signal,
        true_values=values.copy(),
        column_names=tuple([c.name for c in cols] + [spec.target_name]),
        signal_features=tuple(sorted({e.feature for e in spec.effects}, key=[c.name for c in cols].index)),
        effects=spec.effects,
        noise_sd=spec.noise_sd,
        target_mean=spec.target_mean,
    )
    masked = values.copy()
    masked[~mask] = np.nan
    table = Table(masked, mask, metas)
    from .tabular import recompute_missingness

    table, _ = recompute_missingness(table)
    return table, truth


def _as_z(column: np.ndarray, cols, name: str) -> np.ndarray:
    """Parent contribution on a z scale (codes get centered/scaled)."""
    spec = next(c for c in cols if c.name == name)
    if spec.kind == "continuous":
        return column
    sd = column.std()
    return (column - column.mean()) / sd if sd > 0 else np.zeros_like(column)


def _draw_mask(spec: CohortSpec, values: np.ndarray, seed_seq) -> np.ndarray:
    n = spec.n_rows
    p = len(spec.columns)
    mask = np.ones((n, p + 1), dtype=bool)
    rng = np.random.default_rng(seed_seq)
    if spec.missing_mechanism == "mar":
        d_idx = next(i for i, c in enumerate(spec.columns) if c.name == spec.mar_driver)
        driver = values[:, d_idx]
        sd = driver.std()
        z_driver = (driver - driver.mean()) / sd if sd > 0 else np.zeros(n)
    for i, c in enumerate(spec.columns):
        rate = c.missing_rate
        if rate <= 0.0:
            continue
        if spec.missing_mechanism == "mcar":
            probs = np.full(n, rate)
        else:
            logit = math.log(rate / (1.0 - rate))
            probs = 1.0 / (1.0 + np.exp(-(logit + spec.mar_slope * z_driver)))
            probs = np.clip(probs * (rate / probs.mean()), 0.0, 0.95)
        mask[:, i] = rng.random(n) >= probs
    return mask


# -- presets ---------------------------------------------------------------


def friedman1(n_rows: int, noise_sd: float = 1.0, seed: int = 0) -> tuple[Table, GroundTruth]:
    """Ten uniform features; y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2
    + 10 x4 + 5 x5 + noise.  Features 6..10 are pure decoys."""
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    children = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(children[0])
    X = rng.uniform(0.0, 1.0, size=(n_rows, 10))
    f = (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )
    noise_rng = np.random.default_rng(children[1])
    y = f + noise_rng.normal(0.0, noise_sd, size=n_rows)
    names = [f"x{i + 1}" for i in range(10)]
    metas = [ColumnMeta(name=nm, kind="continuous") for nm in names]
    metas.append(ColumnMeta(name="y", kind="continuous", role="target"))
    values = np.column_stack([X, y])
    table = Table(values, np.ones_like(values, dtype=bool), metas)
    truth = GroundTruth(
        true_target=f,
        true_values=values.copy(),
        column_names=tuple(names + ["y"]),
        signal_features=tuple(names[:5]),
        effects=(),
        noise_sd=noise_sd,
        target_mean=float(np.mean(f)),
    )
    return table, truth


# effect sizes in grams on standardized feature scales; chosen so the
# generated birth weights land near mean 2800 g, sd ~400 g
_PAPER_EFFECTS = (
    ("plac_wt_g", "linear", 234.0, 0.0, 450.0, 90.0, "delivery", "maternal"),
    ("ga_del_days", "linear", 195.0, 0.0, 268.0, 10.0, "delivery", "maternal"),
    ("fundal_ht_cm", "linear", 117.0, 0.0, 31.0, 2.5, "prenatal", "maternal"),
    ("abd_cir_cm", "linear", 91.0, 0.0, 88.0, 6.0, "prenatal", "maternal"),
    ("wt_prepreg_kg", "linear", 78.0, 0.0, 52.0, 7.0, "prenatal", "maternal"),
    ("glu_fasting_mg", "linear", -65.0, 0.0, 86.0, 9.0, "prenatal", "maternal"),
    ("lunch_cal_v1", "linear", 52.0, 0.0, 550.0, 110.0, "prenatal", "maternal"),
    ("f_head_cir_cm", "nonmonotone", 90.0, 0.0, 54.5, 1.6, "prenatal", "paternal"),
    ("f_plt_count", "threshold", -70.0, -1.45, 230.0, 55.0, "prenatal", "paternal"),
)


def paper_shaped(seed: int = 0) -> CohortSpec:
    """An 800-row, 5,979-column cohort whose staged tags reproduce the
    published filter trajectory 5979 -> 1122 -> 867 -> 852 under the
    default plan, with post-filter missingness landing at 4.37%.

    Post-filter composition: 305 continuous columns (304 features plus
    the target) and 547 ordinal features; 15 nominal columns fall to
    the numeric-kinds step; 255 high-missing columns fall to the
    observed-fraction step; 4,857 postnatal columns fall to the stage
    step.
    """
    n_signal_cont = len(_PAPER_EFFECTS)
    columns: list[PlantedColumn] = []
    effects: list[EffectSpec] = []

    # post-filter survivor rate tuned so overall missingness of the
    # 852-column filtered table sits at 4.37% (driver and target are
    # fully observed)
    survivor_rate = 0.0437 * 852.0 / 850.0

    for name, kind, scale, param, loc, sigma, stage, lineage in _PAPER_EFFECTS:
        rate = 0.0 if name == "ga_del_days" else survivor_rate
        columns.append(
            PlantedColumn(
                name=name,
                kind="continuous",
                stage=stage,
                lineage=lineage,
                loc=loc,
                scale=sigma,
                missing_rate=rate,
            )
        )
        effects.append(EffectSpec(feature=name, kind=kind, scale=scale, param=param))

    columns.append(
        PlantedColumn(
            name="sex_code",
            kind="ordinal",
            stage="delivery",
            lineage="offspring",
            n_categories=2,
            missing_rate=survivor_rate,
        )
    )
    effects.append(EffectSpec(feature="sex_code", kind="linear", scale=55.0))

    lineage_cycle = ("maternal", "maternal", "maternal", "paternal", "other")

    n_decoy_cont = 304 - n_signal_cont
    for i in range(n_decoy_cont):
        lin = lineage_cycle[i % len(lineage_cycle)]
        prefix = {"maternal": "m", "paternal": "f", "other": "o"}[lin]
        columns.append(
            PlantedColumn(
                name=f"{prefix}_cont_{i:04d}",
                kind="continuous",
                stage="prenatal",
                lineage=lin,
                missing_rate=survivor_rate,
            )
        )
    for i in range(547 - 1):  # sex_code is the one ordinal signal
        lin = lineage_cycle[i % len(lineage_cycle)]
        prefix = {"maternal": "m", "paternal": "f", "other": "o"}[lin]
        columns.append(
            PlantedColumn(
                name=f"{prefix}_ord_{i:04d}",
                kind="ordinal",
                stage="prenatal",
                lineage=lin,
                n_categories=6,
                missing_rate=survivor_rate,
            )
        )
    for i in range(15):
        columns.append(
            PlantedColumn(
                name=f"m_label_{i:02d}",
                kind="nominal",
                stage="prenatal",
                lineage="maternal",
                n_categories=8,
                missing_rate=survivor_rate,
            )
        )
    for i in range(255):
        columns.append(
            PlantedColumn(
                name=f"m_sparse_{i:03d}",
                kind="continuous",
                stage="prenatal",
                lineage="maternal",
                missing_rate=0.55,
            )
        )
    for i in range(4857):
        lin = lineage_cycle[i % len(lineage_cycle)]
        prefix = {"maternal": "m", "paternal": "f", "other": "o"}[lin]
        kind = "continuous" if i % 5 < 2 else "ordinal"
        columns.append(
            PlantedColumn(
                name=f"{prefix}_post_{i:04d}",
                kind=kind,
                stage="postnatal",
                lineage=lin,
                n_categories=6,
                missing_rate=0.5465,
            )
        )

    return CohortSpec(
        n_rows=800,
        columns=tuple(columns),
        effects=tuple(effects),
        noise_sd=150.0,
        target_name="birth_weight_g",
        target_mean=2800.0,
        target_clip_min=800.0,
        missing_mechanism="mar",
        mar_driver="ga_del_days",
        seed=seed,
    )


def paper_filter_plan() -> FilterPlan:
    """Default staged plan: drop postnatal columns, keep columns at
    least 60% observed, keep numeric-coded kinds."""
    return FilterPlan(
        (
            DropStage(frozenset({"postnatal"})),
            MinObserved(0.6),
            KeepKinds(frozenset({"continuous", "ordinal"})),
        )
    )


def selection_benchmark(seed: int = 0, n_rows: int = 1000, n_decoys: int = 200) -> CohortSpec:
    """Ten planted signals (eight linear, one threshold, one bump)
    among pure-noise decoys, fully observed."""
    columns: list[PlantedColumn] = []
    effects: list[EffectSpec] = []
    linear_scales = (12.0, 11.0, 10.0, 9.0, 8.0, 7.0, 6.5, 6.0)
    for i, s in enumerate(linear_scales):
        name = f"sig_lin_{i}"
        columns.append(PlantedColumn(name=name))
        effects.append(EffectSpec(feature=name, kind="linear", scale=s))
    columns.append(PlantedColumn(name="sig_step"))
    effects.append(EffectSpec(feature="sig_step", kind="threshold", scale=14.0, param=0.0))
    columns.append(PlantedColumn(name="sig_bump"))
    effects.append(EffectSpec(feature="sig_bump", kind="nonmonotone", scale=18.0))
    for i in range(n_decoys):
        columns.append(PlantedColumn(name=f"decoy_{i:03d}"))
    return CohortSpec(
        n_rows=n_rows,
        columns=tuple(columns),
        effects=tuple(effects),
        noise_sd=6.0,
        target_name="target",
        seed=seed,
    )


def mar_imputation_benchmark(seed: int = 0, n_rows: int = 2000) -> CohortSpec:
    """Ten continuous columns with ~30% missing-at-random cells driven
    by a fully observed column, each correlated with observed anchors
    so a conditional imputer has signal to exploit."""
    columns = [
        PlantedColumn(name="driver"),
        PlantedColumn(name="anchor_a"),
        PlantedColumn(name="anchor_b"),
    ]
    for i in range(10):
        columns.append(
            PlantedColumn(
                name=f"gap_{i:02d}",
                missing_rate=0.30,
                depends_on=("anchor_a", "anchor_b"),
                dependence=0.8,
            )
        )
    effects = (EffectSpec(feature="gap_00", kind="linear", scale=2.0),)
    return CohortSpec(
        n_rows=n_rows,
        columns=tuple(columns),
        effects=effects,
        noise_sd=1.0,
        missing_mechanism="mar",
        mar_driver="driver",
        seed=seed,
    )
