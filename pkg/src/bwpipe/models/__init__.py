"""Native regressors: penalized linear models, gradient boosting, and
Bayesian additive regression trees."""

from __future__ import annotations

import numpy as np

from .bart import BartConfig, BartPosterior, PosteriorPrediction, fit_bart  # noqa: F401
from .boosting import GbrParams, TreeEnsemble, fit_gbr  # noqa: F401
from .io import load_model, model_from_dict, model_to_dict, save_model  # noqa: F401
from .linear import LinearModel, fit_linear, subgradient_gap  # noqa: F401
from .tree import DecisionTree, grow_tree  # noqa: F401

Model = LinearModel | TreeEnsemble | BartPosterior


def predict(model: Model, X: np.ndarray) -> np.ndarray:
    """Point prediction for any fitted model; BART returns the mean
    over posterior draws."""
    if isinstance(model, (LinearModel, TreeEnsemble, BartPosterior)):
        return model.predict(X)
    raise TypeError(f"cannot predict with object of type {type(model).__name__}")


def model_importance(model: Model) -> np.ndarray:
    """Per-feature importance: |coefficient| for linear models, total
    split gain for tree ensembles, split-rule fraction for BART."""
    if isinstance(model, LinearModel):
        return model.importance()
    if isinstance(model, TreeEnsemble):
        return model.feature_gain()
    if isinstance(model, BartPosterior):
        return model.split_fractions()
    raise TypeError(f"no importance for object of type {type(model).__name__}")
