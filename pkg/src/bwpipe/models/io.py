"""Versioned JSON serialization for fitted models."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bart import BartConfig, BartPosterior, PackedForest
from .boosting import TreeEnsemble
from .linear import LinearModel
from .tree import DecisionTree

FORMAT = "bwpipe-model"
VERSION = 1


def model_to_dict(model) -> dict:
    if isinstance(model, LinearModel):
        mean, sd = model.standardization
        body = {
            "kind": "linear",
            "intercept": model.intercept,
            "coefficients": [float(v) for v in model.coefficients],
            "feature_mean": [float(v) for v in mean],
            "feature_sd": [float(v) for v in sd],
            "l1_penalty": model.l1_penalty,
            "l2_penalty": model.l2_penalty,
        }
    elif isinstance(model, TreeEnsemble):
        body = {
            "kind": "ensemble",
            "ensemble_kind": model.kind,
            "base_prediction": model.base_prediction,
            "learning_rate": model.learning_rate,
            "n_features": model.n_features,
            "trees": [t.to_dict() for t in model.trees],
            "train_loss": [float(v) for v in model.train_loss],
        }
    elif isinstance(model, BartPosterior):
        body = {
            "kind": "bart",
            "config": model.config.to_dict(),
            "n_features": model.n_features,
            "base_prediction": model.base_prediction,
            "sigma_draws": [float(v) for v in model.sigma_draws],
            "draws": [_forest_to_dict(f) for f in model.packed],
        }
    else:
        raise TypeError(f"cannot serialize model of type {type(model).__name__}")
    return {"format": FORMAT, "version": VERSION, **body}


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ValueError("not a model document")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    kind = d["kind"]
    if kind == "linear":
        return LinearModel(
            intercept=float(d["intercept"]),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            standardization=(
                np.asarray(d["feature_mean"], dtype=float),
                np.asarray(d["feature_sd"], dtype=float),
            ),
            l1_penalty=float(d["l1_penalty"]),
            l2_penalty=float(d["l2_penalty"]),
        )
    if kind == "ensemble":
        return TreeEnsemble(
            base_prediction=float(d["base_prediction"]),
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            learning_rate=float(d["learning_rate"]),
            kind=d["ensemble_kind"],
            n_features=int(d["n_features"]),
            train_loss=np.asarray(d["train_loss"], dtype=float),
        )
    if kind == "bart":
        return BartPosterior(
            config=BartConfig(**d["config"]),
            n_features=int(d["n_features"]),
            base_prediction=float(d["base_prediction"]),
            sigma_draws=np.asarray(d["sigma_draws"], dtype=float),
            packed=[_forest_from_dict(f) for f in d["draws"]],
        )
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True), encoding="utf-8")


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _forest_to_dict(f: PackedForest) -> dict:
    return {
        "feature": [int(v) for v in f.feature],
        "threshold": [None if np.isnan(v) else float(v) for v in f.threshold],
        "left": [int(v) for v in f.left],
        "right": [int(v) for v in f.right],
        "value": [float(v) for v in f.value],
        "cover": [float(v) for v in f.cover],
        "offsets": [int(v) for v in f.offsets],
    }


def _forest_from_dict(d: dict) -> PackedForest:
    return PackedForest(
        feature=np.asarray(d["feature"], dtype=np.int64),
        threshold=np.asarray(
            [np.nan if v is None else v for v in d["threshold"]], dtype=float
        ),
        left=np.asarray(d["left"], dtype=np.int64),
        right=np.asarray(d["right"], dtype=np.int64),
        value=np.asarray(d["value"], dtype=float),
        cover=np.asarray(d["cover"], dtype=float),
        offsets=np.asarray(d["offsets"], dtype=np.int64),
    )
