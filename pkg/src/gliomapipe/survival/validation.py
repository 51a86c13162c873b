"""Leakage-free pipeline fitting (scale -> RFE -> top-k -> regressor) and k-fold evaluation."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from ..errors import ConfigError, DataError
from ..radiomics import FeatureScaler, apply_scaler, fit_scaler
from .evaluation import OsEvaluation, evaluate_os
from .regressors import RegressionModel, RegressorKind, make_params
from .selection import Selection, fold_assignments, rfe_rank, select_k

DEFAULT_K_MAX = 20


@dataclass
class SurvivalPipeline:
    scaler: FeatureScaler
    ranking: list
    selection: Optional[Selection]
    model: RegressionModel

    @property
    def selected(self) -> list:
        return self.selection.selected if self.selection is not None else list(self.ranking)

    def predict(self, features: pd.DataFrame) -> np.ndarray:
        scaled = apply_scaler(features, self.scaler)
        return self.model.predict(scaled[self.selected])


def fit_pipeline(kind, features: pd.DataFrame, targets, params=None, seed: int = 0,
                 select_features: bool = True, k_max: Optional[int] = None,
                 rfe_kind=RegressorKind.GBT, rfe_params=None, inner_folds: int = 4) -> SurvivalPipeline:
    """Fit scaler, RFE ranking, k selection and the final regressor on ``features`` only."""
    y = np.asarray(targets, dtype=np.float64)
    scaler = fit_scaler(features)
    scaled = apply_scaler(features, scaler)
    if not select_features:
        model = RegressionModel(kind, params, seed).fit(scaled, y)
        return SurvivalPipeline(scaler, list(scaled.columns), None, model)
    ranking = rfe_rank(scaled, y, rfe_kind, rfe_params, seed)
    k_max = min(k_max or DEFAULT_K_MAX, len(ranking))
    folds = min(inner_folds, len(y) // 2)
    if folds < 2:
        raise DataError(f"{len(y)} training rows are too few for inner cross-validation")
    selection = select_k(scaled, y, ranking, k_max, kind, params, folds, seed)
    model = RegressionModel(kind, params, seed).fit(scaled[selection.selected], y)
    return SurvivalPipeline(scaler, ranking, selection, model)


@dataclass
class FoldResult:
    fold: int
    validation_rows: list
    scaler: FeatureScaler
    selected: list
    evaluation: OsEvaluation


@dataclass
class CVResult:
    kind: str
    assignment: np.ndarray
    folds: list
    aggregate: OsEvaluation
    oof_predictions: np.ndarray = field(repr=False, default=None)


def cross_validate(kind, features: pd.DataFrame, targets, folds: int = 4, seed: int = 0, params=None,
                   **pipeline_options) -> CVResult:
    """Seeded k-fold CV; every fold refits scaler and feature selection on its training rows."""
    if folds < 2:
        raise ConfigError(f"need at least 2 folds, got {folds}")
    y = np.asarray(targets, dtype=np.float64)
    if features.shape[0] != y.shape[0]:
        raise DataError(f"{features.shape[0]} feature rows but {y.shape[0]} targets")
    if len(y) < folds:
        raise DataError(f"{len(y)} rows are fewer than {folds} folds")
    assign = fold_assignments(len(y), folds, seed)
    oof = np.empty_like(y)
    results = []
    for f in range(folds):
        va = assign == f
        pipe = fit_pipeline(kind, features[~va], y[~va], params, seed, **pipeline_options)
        oof[va] = pipe.predict(features[va])
        results.append(FoldResult(f, list(np.flatnonzero(va)), pipe.scaler, pipe.selected,
                                  evaluate_os(oof[va], y[va])))
    aggregate = OsEvaluation.mean_of(r.evaluation for r in results)
    return CVResult(RegressorKind(kind).value, assign, results, aggregate, oof)


def tune_hyperparameters(kind, features: pd.DataFrame, targets, grid: dict, folds: int = 4,
                         seed: int = 0, base: Optional[dict] = None):
    """Exhaustive grid search by cross-validated MSE on already-scaled features.

    Returns (best params, list of (overrides, mse)).
    """
    kind = RegressorKind(kind)
    y = np.asarray(targets, dtype=np.float64)
    assign = fold_assignments(len(y), folds, seed)
    keys = sorted(grid)
    trials = []
    for values in itertools.product(*(grid[k] for k in keys)):
        overrides = {**(base or {}), **dict(zip(keys, values))}
        params = make_params(kind, overrides)
        pred = np.empty_like(y)
        for f in range(folds):
            va = assign == f
            pred[va] = RegressionModel(kind, params, seed).fit(features[~va], y[~va]).predict(features[va])
        trials.append((overrides, float(np.mean((pred - y) ** 2))))
    best = min(trials, key=lambda t: t[1])
    return make_params(kind, best[0]), trials


def params_dict(params) -> dict:
    d = asdict(params)
    if "hidden" in d:
        d["hidden"] = list(d["hidden"])
    return d
