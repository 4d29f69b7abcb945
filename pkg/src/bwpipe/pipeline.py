"""Stage orchestration: filter -> profile -> impute -> select -> train
-> explain -> evaluate, with on-disk artifact handoff.

Every stage writes its outputs plus a stage manifest embedding the
config hash; stages refuse upstream artifacts produced under a
different hash.  Rerunning with an identical config reproduces
byte-identical numeric artifacts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__
from .config import ArtifactMismatch, PipelineConfig, StageError, canonical_json
from .evaluation import compute_metrics, residual_report
from .explainability import pdp, permutation_importance, shap_importance, tree_shap
from .imputation import KnnConfig, MiceConfig, knn_impute, mice_impute, pool_imputations
from .models import (
    BartConfig,
    BartPosterior,
    GbrParams,
    TreeEnsemble,
    fit_bart,
    fit_gbr,
    fit_linear,
    load_model,
    save_model,
)
from .profiling import profile_table, who_bw_class
from .ranking import SelectorRanking
from .selection import (
    aggregate_rankings,
    anova_f_scores,
    boruta,
    correlation_scores,
    embedded_scores,
    mutual_information_scores,
    relief_f_scores,
)
from .synthdata import (
    friedman1,
    generate,
    mar_imputation_benchmark,
    paper_filter_plan,
    paper_shaped,
    selection_benchmark,
)
from .tabular import (
    FilterPlan,
    Table,
    apply_filter_plan,
    load_csv,
    read_schema,
    recompute_missingness,
    split,
    write_csv,
    write_schema,
)

STAGES = ("synth", "filter", "profile", "impute", "select", "train", "explain", "report")

SHAP_BACKGROUND_ROWS = 256
BART_SHAP_DRAW_STRIDE = 10
SELECTION_SUBFIT_PARAMS = {"n_iterations": 100, "max_depth": 3, "learning_rate": 0.1}


# -- artifact plumbing -------------------------------------------------------


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def _stage_dir(cfg: PipelineConfig, stage: str) -> Path:
    return cfg.output_dir / stage


def _write_stage_manifest(cfg: PipelineConfig, stage: str, outputs: list[str]) -> None:
    _write_json(
        _stage_dir(cfg, stage) / "stage_manifest.json",
        {
            "stage": stage,
            "config_hash": cfg.config_hash(),
            "seed": cfg.stage_seed(stage),
            "outputs": sorted(outputs),
            "version": __version__,
        },
    )


def _require_stage(cfg: PipelineConfig, stage: str) -> None:
    path = _stage_dir(cfg, stage) / "stage_manifest.json"
    if not path.exists():
        raise StageError(f"missing upstream artifact: stage {stage!r} has not run")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("config_hash") != cfg.config_hash():
        raise ArtifactMismatch(
            f"stage {stage!r} artifacts were produced under config hash "
            f"{manifest.get('config_hash')!r}, current is {cfg.config_hash()!r}"
        )


def _load_table(dir_path: Path, csv_name: str) -> Table:
    schema = read_schema(dir_path / "schema.json")
    table = load_csv(dir_path / csv_name, schema)
    return table


# -- stages ------------------------------------------------------------------


def stage_synth(cfg: PipelineConfig) -> None:
    """Generate the synthetic cohort named by the input preset."""
    inp = cfg["input"]
    if inp["kind"] != "synth":
        return
    seed = int(inp.get("seed", cfg.stage_seed("synth")))
    preset = inp["preset"]
    if preset == "paper-shaped":
        table, truth = generate(paper_shaped(seed))
    elif preset == "friedman1":
        table, truth = friedman1(n_rows=2000, noise_sd=1.0, seed=seed)
    elif preset == "selection-benchmark":
        table, truth = generate(selection_benchmark(seed))
    elif preset == "mar-benchmark":
        table, truth = generate(mar_imputation_benchmark(seed))
    else:  # pragma: no cover - schema blocks this
        raise StageError(f"unknown preset {preset!r}")
    out = _stage_dir(cfg, "synth")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(table, out / "cohort.csv")
    write_schema(table, out / "schema.json")
    truth.to_json(out / "groundtruth.json")
    _write_stage_manifest(cfg, "synth", ["cohort.csv", "schema.json", "groundtruth.json"])


def _input_table(cfg: PipelineConfig) -> Table:
    inp = cfg["input"]
    if inp["kind"] == "csv":
        if "schema_path" not in inp:
            raise StageError("csv input needs schema_path")
        return load_csv(inp["path"], read_schema(inp["schema_path"]))
    _require_stage(cfg, "synth")
    return _load_table(_stage_dir(cfg, "synth"), "cohort.csv")


def stage_filter(cfg: PipelineConfig) -> None:
    table = _input_table(cfg)
    plan = FilterPlan.from_dict(cfg["filter_plan"]) if "filter_plan" in cfg.raw else paper_filter_plan()
    filtered, trace = apply_filter_plan(table, plan)
    filtered, overall = recompute_missingness(filtered)
    out = _stage_dir(cfg, "filter")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(filtered, out / "filtered.csv")
    write_schema(filtered, out / "schema.json")
    _write_json(
        out / "trace.json",
        {
            "counts": list(trace.counts),
            "steps": list(trace.steps),
            "dataset_missingness": overall,
            "plan": plan.to_dict(),
        },
    )
    _write_stage_manifest(cfg, "filter", ["filtered.csv", "schema.json", "trace.json"])


def stage_profile(cfg: PipelineConfig) -> None:
    _require_stage(cfg, "filter")
    table = _load_table(_stage_dir(cfg, "filter"), "filtered.csv")
    report = profile_table(table)
    out = _stage_dir(cfg, "profile")
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "profile.json")
    y, y_mask = table.target_vector()
    classes: dict[str, int] = {}
    for value in y[y_mask]:
        if value > 0:
            label = who_bw_class(float(value)).value
            classes[label] = classes.get(label, 0) + 1
    _write_json(out / "target_who_classes.json", classes)
    _write_stage_manifest(cfg, "profile", ["profile.json", "target_who_classes.json"])


def stage_impute(cfg: PipelineConfig) -> None:
    _require_stage(cfg, "filter")
    table = _load_table(_stage_dir(cfg, "filter"), "filtered.csv")
    imp_cfg = cfg.raw.get("imputation", {})
    knn_cfg = KnnConfig(**imp_cfg.get("knn", {}))
    mice_kwargs = dict(imp_cfg.get("mice", {}))
    mice_kwargs["seed"] = cfg.stage_seed("impute")
    mice_cfg = MiceConfig(**mice_kwargs)

    discrete_targets = {
        m.name
        for j, m in enumerate(table.meta)
        if m.kind in ("ordinal", "nominal") and not table.mask[:, j].all()
    }
    continuous_targets = {
        m.name
        for j, m in enumerate(table.meta)
        if m.kind == "continuous" and not table.mask[:, j].all()
    }
    completed = table
    if discrete_targets:
        completed = knn_impute(completed, knn_cfg, discrete_targets)
    if continuous_targets:
        chains = mice_impute(completed, mice_cfg, continuous_targets)
        completed = pool_imputations(chains)
    out = _stage_dir(cfg, "impute")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(completed, out / "imputed.csv")
    write_schema(completed, out / "schema.json")
    with (out / "provenance.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(completed.column_names)
        for i in range(completed.n_rows):
            writer.writerow(completed.imputed[i].astype(int).tolist())
    _write_stage_manifest(cfg, "impute", ["imputed.csv", "schema.json", "provenance.csv"])


def _scoring_model_factory(seed: int):
    params = GbrParams(seed=seed, **SELECTION_SUBFIT_PARAMS)
    return lambda X, y: fit_gbr(X, y, params)


def _run_selector(method: str, table: Table, target: str, cfg: PipelineConfig) -> SelectorRanking:
    sel = cfg.raw.get("selection", {})
    seed = cfg.stage_seed(f"select:{method}")
    if method in ("pearson", "spearman", "kendall"):
        return correlation_scores(table, target, method)
    if method == "mutual_information":
        return mutual_information_scores(table, target, bins=sel.get("mi_bins", 10))
    if method == "anova_f":
        return anova_f_scores(table, target)
    if method == "relief_f":
        return relief_f_scores(
            table,
            target,
            n_neighbors=sel.get("relief_neighbors", 10),
            n_samples=sel.get("relief_samples", 250),
            seed=seed,
        )
    if method in ("lasso", "ridge", "elastic_net", "tree_gain"):
        return embedded_scores(table, target, method)
    if method in ("permutation", "shap"):
        from .selection import _complete_matrix

        X, y, names = _complete_matrix(table, target)
        model = _scoring_model_factory(seed)(X, y)
        if method == "permutation":
            return permutation_importance(
                model, X, y, metric="rmse", n_repeats=3, seed=seed, feature_names=names
            )
        keep = min(len(y), SHAP_BACKGROUND_ROWS)
        rows = np.linspace(0, len(y) - 1, keep).astype(int)
        matrix = tree_shap(model, X[rows], feature_names=names)
        return shap_importance(matrix)
    raise StageError(f"unknown selector id {method!r}")


def stage_select(cfg: PipelineConfig) -> None:
    _require_stage(cfg, "impute")
    table = _load_table(_stage_dir(cfg, "impute"), "imputed.csv")
    target = table.target_name
    sel = cfg.raw.get("selection", {})
    methods = sel.get("methods", ["pearson"])
    budget = int(sel.get("budget", 20))
    rankings = [_run_selector(m, table, target, cfg) for m in methods]
    consensus = aggregate_rankings(rankings, "borda")
    selected = consensus.top(min(budget, consensus.n_features))

    out = _stage_dir(cfg, "select")
    out.mkdir(parents=True, exist_ok=True)
    with (out / "rankings.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method_id", "feature", "score", "rank"])
        for ranking in rankings:
            for row in ranking.to_rows():
                writer.writerow([row[0], row[1], repr(row[2]), row[3]])
    _write_json(
        out / "consensus.json",
        {
            "method_id": consensus.method_id,
            "entries": [
                {"feature": e.feature, "score": e.score, "rank": e.rank}
                for e in sorted(consensus.entries, key=lambda e: e.rank)
            ],
        },
    )
    _write_json(out / "selected.json", {"budget": budget, "features": selected})
    outputs = ["rankings.csv", "consensus.json", "selected.json"]
    boruta_cfg = sel.get("boruta", {})
    if boruta_cfg.get("enabled"):
        verdict = boruta(
            table,
            target,
            alpha=boruta_cfg.get("alpha", 0.05),
            max_rounds=boruta_cfg.get("max_rounds", 50),
            seed=cfg.stage_seed("select:boruta"),
        )
        _write_json(out / "boruta.json", verdict.to_dict())
        outputs.append("boruta.json")
    _write_stage_manifest(cfg, "select", outputs)


def _selected_features(cfg: PipelineConfig) -> list[str]:
    path = _stage_dir(cfg, "select") / "selected.json"
    return json.loads(path.read_text(encoding="utf-8"))["features"]


def _model_matrix(table: Table, features: list[str]) -> tuple[np.ndarray, np.ndarray]:
    f_idx = [table.col_index(f) for f in features]
    t_idx = table.target_index()
    return table.values[:, f_idx], table.values[:, t_idx]


def stage_train(cfg: PipelineConfig) -> None:
    _require_stage(cfg, "impute")
    _require_stage(cfg, "select")
    table = _load_table(_stage_dir(cfg, "impute"), "imputed.csv")
    features = _selected_features(cfg)
    eval_cfg = cfg.raw.get("evaluation", {})
    test_fraction = float(eval_cfg.get("test_fraction", 0.2))
    split_seed = cfg.stage_seed("split")
    train_table, test_table = split(table, test_fraction, split_seed)

    out = _stage_dir(cfg, "train")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(table.n_rows)
    n_test = int(np.floor(table.n_rows * test_fraction + 0.5))
    _write_json(
        out / "split.json",
        {
            "seed": split_seed,
            "test_fraction": test_fraction,
            "test_rows": sorted(int(i) for i in perm[:n_test]),
            "train_rows": sorted(int(i) for i in perm[n_test:]),
        },
    )

    X_train, y_train = _model_matrix(train_table, features)
    outputs = ["split.json"]
    for model_cfg in cfg["models"]:
        name = model_cfg["name"]
        kind = model_cfg["kind"]
        params = dict(model_cfg.get("params", {}))
        seed = cfg.stage_seed(f"train:{name}")
        if kind == "gbr":
            model = fit_gbr(X_train, y_train, GbrParams(seed=seed, **params))
        elif kind == "bart":
            model = fit_bart(X_train, y_train, BartConfig(seed=seed, **params))
        else:
            model = fit_linear(X_train, y_train, **params)
        save_model(model, out / f"model_{name}.json")
        outputs.append(f"model_{name}.json")
    _write_stage_manifest(cfg, "train", outputs)


def _write_curve_csv(path: Path, curve) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["grid", "mean_prediction"]
        if curve.band_lower is not None:
            header += ["band_lower", "band_upper"]
        writer.writerow(header)
        for i in range(len(curve.grid)):
            row = [repr(float(curve.grid[i])), repr(float(curve.mean_prediction[i]))]
            if curve.band_lower is not None:
                row += [repr(float(curve.band_lower[i])), repr(float(curve.band_upper[i]))]
            writer.writerow(row)


def stage_explain(cfg: PipelineConfig) -> None:
    from . import plots

    _require_stage(cfg, "impute")
    _require_stage(cfg, "select")
    _require_stage(cfg, "train")
    table = _load_table(_stage_dir(cfg, "impute"), "imputed.csv")
    features = _selected_features(cfg)
    split_info = json.loads((_stage_dir(cfg, "train") / "split.json").read_text(encoding="utf-8"))
    train_rows = np.asarray(split_info["train_rows"], dtype=int)
    X_all, y_all = _model_matrix(table, features)
    X_train, y_train = X_all[train_rows], y_all[train_rows]

    eval_cfg = cfg.raw.get("evaluation", {})
    n_pdp = int(eval_cfg.get("pdp_features", 4))
    pdp_points = int(eval_cfg.get("pdp_points", 50))

    out = _stage_dir(cfg, "explain")
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[str] = []
    for model_cfg in cfg["models"]:
        name = model_cfg["name"]
        model = load_model(_stage_dir(cfg, "train") / f"model_{name}.json")
        if not isinstance(model, (TreeEnsemble, BartPosterior)):
            continue
        keep = min(len(train_rows), SHAP_BACKGROUND_ROWS)
        rows = np.linspace(0, len(train_rows) - 1, keep).astype(int)
        stride = BART_SHAP_DRAW_STRIDE if isinstance(model, BartPosterior) else 1
        matrix = tree_shap(model, X_train[rows], feature_names=features, draw_stride=stride)
        ranking = shap_importance(matrix)
        _write_json(
            out / f"shap_importance_{name}.json",
            {
                "model": name,
                "base_value": matrix.base_value,
                "entries": [
                    {"feature": e.feature, "percent": e.score, "rank": e.rank}
                    for e in sorted(ranking.entries, key=lambda e: e.rank)
                ],
            },
        )
        with (out / f"shap_values_{name}.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(matrix.feature_names))
            for r in range(matrix.values.shape[0]):
                writer.writerow([repr(float(v)) for v in matrix.values[r]])
        ordered = ranking.top(min(n_pdp, len(features)))
        plots.importance_plot(
            [e.feature for e in sorted(ranking.entries, key=lambda e: e.rank)][:20],
            [e.score for e in sorted(ranking.entries, key=lambda e: e.rank)][:20],
            out / f"importance_{name}.svg",
            f"Attribution share ({name})",
        )
        outputs += [
            f"shap_importance_{name}.json",
            f"shap_values_{name}.csv",
            f"importance_{name}.svg",
        ]
        for feat in ordered:
            j = features.index(feat)
            curve = pdp(
                model,
                X_train,
                j,
                grid=pdp_points,
                feature_name=feat,
                max_background_rows=SHAP_BACKGROUND_ROWS,
            )
            stem = f"pdp_{name}_{feat}"
            _write_curve_csv(out / f"{stem}.csv", curve)
            plots.pdp_plot(curve, out / f"{stem}.svg")
            outputs += [f"{stem}.csv", f"{stem}.svg"]
    perm_model_cfg = cfg["models"][0]
    model = load_model(_stage_dir(cfg, "train") / f"model_{perm_model_cfg['name']}.json")
    perm = permutation_importance(
        model,
        X_train,
        y_train,
        metric="rmse",
        n_repeats=3,
        seed=cfg.stage_seed("explain:permutation"),
        feature_names=features,
    )
    _write_json(
        out / "permutation_importance.json",
        {
            "model": perm_model_cfg["name"],
            "entries": [
                {"feature": e.feature, "score": e.score, "rank": e.rank}
                for e in sorted(perm.entries, key=lambda e: e.rank)
            ],
        },
    )
    outputs.append("permutation_importance.json")
    _write_stage_manifest(cfg, "explain", outputs)


def stage_report(cfg: PipelineConfig) -> None:
    from . import plots

    _require_stage(cfg, "impute")
    _require_stage(cfg, "select")
    _require_stage(cfg, "train")
    table = _load_table(_stage_dir(cfg, "impute"), "imputed.csv")
    features = _selected_features(cfg)
    split_info = json.loads((_stage_dir(cfg, "train") / "split.json").read_text(encoding="utf-8"))
    test_rows = np.asarray(split_info["test_rows"], dtype=int)
    X_all, y_all = _model_matrix(table, features)
    X_test, y_test = X_all[test_rows], y_all[test_rows]

    eval_cfg = cfg.raw.get("evaluation", {})
    n_bins = int(eval_cfg.get("n_bins", 20))

    out = _stage_dir(cfg, "report")
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[str] = []
    metrics_payload = {}
    comparison_rows = []
    for model_cfg in cfg["models"]:
        name = model_cfg["name"]
        model = load_model(_stage_dir(cfg, "train") / f"model_{name}.json")
        yhat = model.predict(X_test)
        metrics = compute_metrics(y_test, yhat, split_id="holdout")
        metrics_payload[name] = metrics.to_dict()
        comparison_rows.append(
            {
                "selector": "borda_consensus",
                "model": name,
                "rmse": metrics.rmse,
                "mse": metrics.mse,
                "r2": metrics.r2,
                "n_test": metrics.n,
            }
        )
        report = residual_report(y_test, yhat, n_bins=n_bins)
        _write_json(out / f"residuals_{name}.json", report.to_dict())
        plots.residual_scatter_plot(yhat, report.residuals, out / f"residual_scatter_{name}.svg", name)
        plots.residual_hist_plot(report, out / f"residual_hist_{name}.svg", name)
        plots.qq_plot(report, out / f"residual_qq_{name}.svg", name)
        outputs += [
            f"residuals_{name}.json",
            f"residual_scatter_{name}.svg",
            f"residual_hist_{name}.svg",
            f"residual_qq_{name}.svg",
        ]
    comparison_rows.sort(key=lambda r: -(r["r2"] if np.isfinite(r["r2"]) else float("-inf")))
    _write_json(
        out / "metrics.json",
        {
            "models": metrics_payload,
            "split": {
                "seed": split_info["seed"],
                "test_fraction": split_info["test_fraction"],
                "n_test": int(len(test_rows)),
            },
            "config_hash": cfg.config_hash(),
        },
    )
    with (out / "comparison.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["selector", "model", "rmse", "mse", "r2", "n_test"])
        for row in comparison_rows:
            writer.writerow(
                [
                    row["selector"],
                    row["model"],
                    repr(row["rmse"]),
                    repr(row["mse"]),
                    repr(row["r2"]),
                    row["n_test"],
                ]
            )
    _write_json(out / "comparison.json", comparison_rows)
    outputs += ["metrics.json", "comparison.csv", "comparison.json"]
    _write_stage_manifest(cfg, "report", outputs)


STAGE_FUNCS = {
    "synth": stage_synth,
    "filter": stage_filter,
    "profile": stage_profile,
    "impute": stage_impute,
    "select": stage_select,
    "train": stage_train,
    "explain": stage_explain,
    "report": stage_report,
}


def run_pipeline(cfg: PipelineConfig) -> Path:
    """Run every stage in order; on failure, write a machine-readable
    error report naming the stage and re-raise as StageError."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "manifest.json",
        {
            "config": cfg.raw,
            "config_hash": cfg.config_hash(),
            "stage_seeds": {s: cfg.stage_seed(s) for s in STAGES},
            "version": __version__,
        },
    )
    for stage in STAGES:
        try:
            STAGE_FUNCS[stage](cfg)
        except Exception as exc:
            _write_json(
                out / "error.json",
                {"stage": stage, "error": f"{type(exc).__name__}: {exc}"},
            )
            if isinstance(exc, StageError):
                raise
            raise StageError(f"stage {stage!r} failed: {exc}") from exc
    return out


def run_stage(cfg: PipelineConfig, stage: str) -> None:
    if stage not in STAGE_FUNCS:
        raise StageError(f"unknown stage {stage!r}")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    STAGE_FUNCS[stage](cfg)


def config_manifest_hash(out_dir: Path) -> str:
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    return manifest["config_hash"]


def hash_numeric_artifacts(out_dir: Path) -> str:
    """Hash of every non-SVG artifact, for rerun byte-identity checks.

    The top-level run record is excluded: it restates the literal
    config (including the output directory), not analysis output.
    """
    import hashlib

    digest = hashlib.sha256()
    top_manifest = out_dir / "manifest.json"
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.suffix != ".svg" and path != top_manifest:
            digest.update(str(path.relative_to(out_dir)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()
