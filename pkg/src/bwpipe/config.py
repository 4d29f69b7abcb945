"""Declarative pipeline configuration: JSON schema, validation, config
hashing, and per-stage seed derivation.

The master seed never drives any stage directly; stage seeds are the
first four bytes (big-endian) of sha256("<master_seed>:<stage_name>"),
so every stage gets an independent, reproducible stream.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

SELECTOR_IDS = (
    "pearson",
    "spearman",
    "kendall",
    "mutual_information",
    "anova_f",
    "relief_f",
    "lasso",
    "ridge",
    "elastic_net",
    "tree_gain",
    "permutation",
    "shap",
)

MODEL_KINDS = ("linear", "gbr", "bart")

PRESETS = ("paper-shaped", "friedman1", "selection-benchmark", "mar-benchmark")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["input", "output_dir", "master_seed"],
    "additionalProperties": False,
    "properties": {
        "input": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["synth", "csv"]},
                "preset": {"enum": list(PRESETS)},
                "path": {"type": "string"},
                "schema_path": {"type": "string"},
                "seed": {"type": "integer"},
            },
            "required": ["kind"],
        },
        "filter_plan": {
            "type": "object",
            "properties": {
                "steps": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["op"],
                        "properties": {
                            "op": {
                                "enum": [
                                    "drop_stage",
                                    "min_observed",
                                    "keep_kinds",
                                    "drop_lineage",
                                ]
                            },
                            "stages": {"type": "array", "items": {"type": "string"}},
                            "threshold": {"type": "number"},
                            "kinds": {"type": "array", "items": {"type": "string"}},
                            "lineages": {"type": "array", "items": {"type": "string"}},
                        },
                    },
                }
            },
        },
        "imputation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "knn": {
                    "type": "object",
                    "properties": {
                        "k": {"type": "integer", "minimum": 1},
                        "distance": {"enum": ["gower_mixed"]},
                        "tie_break": {"enum": ["lowest_row_index"]},
                    },
                },
                "mice": {
                    "type": "object",
                    "properties": {
                        "n_iterations": {"type": "integer", "minimum": 1},
                        "n_imputations": {"type": "integer", "minimum": 1},
                        "conditional_model": {
                            "enum": ["predictive_mean_matching", "ridge_linear"]
                        },
                        "pmm_donors": {"type": "integer", "minimum": 1},
                        "ridge_penalty": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "selection": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "methods": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"enum": list(SELECTOR_IDS)},
                },
                "budget": {"type": "integer", "minimum": 1},
                "mi_bins": {"type": "integer", "minimum": 2},
                "relief_neighbors": {"type": "integer", "minimum": 1},
                "relief_samples": {"type": "integer", "minimum": 1},
                "boruta": {
                    "type": "object",
                    "properties": {
                        "enabled": {"type": "boolean"},
                        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "max_rounds": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "models": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "kind"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z0-9_-]+$"},
                    "kind": {"enum": list(MODEL_KINDS)},
                    "params": {"type": "object"},
                },
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "test_fraction": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "exclusiveMaximum": 1,
                },
                "n_bins": {"type": "integer", "minimum": 2},
                "pdp_features": {"type": "integer", "minimum": 1},
                "pdp_points": {"type": "integer", "minimum": 2},
            },
        },
        "output_dir": {"type": "string"},
        "master_seed": {"type": "integer"},
        "threads": {"type": "integer", "minimum": 1},
    },
}


class ConfigError(ValueError):
    """Configuration failed validation; maps to exit code 2."""


class StageError(RuntimeError):
    """A pipeline stage failed; maps to exit code 3."""


class ArtifactMismatch(StageError):
    """An upstream artifact was produced under a different config."""


DEFAULT_CONFIG = {
    "input": {"kind": "synth", "preset": "paper-shaped", "seed": 20240101},
    "filter_plan": {
        "steps": [
            {"op": "drop_stage", "stages": ["postnatal"]},
            {"op": "min_observed", "threshold": 0.6},
            {"op": "keep_kinds", "kinds": ["continuous", "ordinal"]},
        ]
    },
    "imputation": {
        "knn": {"k": 5},
        # wide tables make full-default chains expensive; the module
        # defaults (10 iterations, 5 imputations) remain for direct use
        "mice": {"n_iterations": 3, "n_imputations": 2, "pmm_donors": 5},
    },
    "selection": {
        "methods": [
            "pearson",
            "spearman",
            "mutual_information",
            "relief_f",
            "tree_gain",
            "lasso",
            "permutation",
            "shap",
        ],
        "budget": 20,
        "boruta": {"enabled": False},
    },
    "models": [
        {"name": "bart", "kind": "bart", "params": {"n_trees": 100, "n_iterations": 1200, "burn_in": 200}},
        {
            "name": "gbr",
            "kind": "gbr",
            "params": {"n_iterations": 1748, "max_depth": 4, "learning_rate": 0.0075},
        },
        {"name": "linear", "kind": "linear", "params": {"l1_penalty": 0.0, "l2_penalty": 1.0}},
    ],
    "evaluation": {"test_fraction": 0.2, "n_bins": 20, "pdp_features": 4, "pdp_points": 50},
    "output_dir": "bwpipe-out",
    "master_seed": 20240101,
}


@dataclass(frozen=True)
class PipelineConfig:
    raw: dict = field(repr=False)

    @staticmethod
    def from_dict(raw: dict) -> "PipelineConfig":
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message}") from exc
        merged = _merge_defaults(DEFAULT_CONFIG, raw)
        if merged["input"]["kind"] == "synth" and "preset" not in merged["input"]:
            raise ConfigError("synth input needs a preset")
        if merged["input"]["kind"] == "csv" and "path" not in merged["input"]:
            raise ConfigError("csv input needs a path")
        names = [m["name"] for m in merged["models"]]
        if len(set(names)) != len(names):
            raise ConfigError("model names must be unique")
        return PipelineConfig(raw=merged)

    @staticmethod
    def from_file(path: str | Path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return PipelineConfig.from_dict(raw)

    def __getitem__(self, key: str):
        return self.raw[key]

    @property
    def output_dir(self) -> Path:
        import os

        override = os.environ.get("BWPIPE_OUTPUT_DIR")
        return Path(override) if override else Path(self.raw["output_dir"])

    @property
    def master_seed(self) -> int:
        return int(self.raw["master_seed"])

    def config_hash(self) -> str:
        """Hash of the analysis semantics; where outputs land and how
        many workers run are deployment details and excluded."""
        semantic = {k: v for k, v in self.raw.items() if k not in ("output_dir", "threads")}
        return hashlib.sha256(canonical_json(semantic).encode("utf-8")).hexdigest()

    def stage_seed(self, stage: str) -> int:
        digest = hashlib.sha256(f"{self.master_seed}:{stage}".encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "big")


def _merge_defaults(defaults, override):
    if isinstance(defaults, dict) and isinstance(override, dict):
        out = dict(defaults)
        for key, value in override.items():
            if key in defaults:
                out[key] = _merge_defaults(defaults[key], value)
            else:
                out[key] = value
        return out
    return override


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
