"""Recursive feature elimination, incremental top-k selection and permutation importance."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import ConfigError, DataError
from .evaluation import bucket_indices
from .regressors import RegressionModel, RegressorKind, check_importance_capability


def fold_assignments(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold index per row: a seeded shuffle dealt round-robin, so fold sizes differ by at most 1."""
    if folds < 2:
        raise ConfigError(f"need at least 2 folds, got {folds}")
    if n < folds:
        raise DataError(f"{n} rows cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % folds
    return assignment


def rfe_rank(features: pd.DataFrame, targets, kind=RegressorKind.GBT, params=None, seed: int = 0) -> list:
    """Feature names ordered most to least important (the last survivor ranks first).

    Each round refits the estimator on the surviving features and drops the
    one with the smallest importance; ties drop the earliest column.
    """
    names = list(features.columns)
    if len(names) < 2:
        raise DataError("RFE needs at least 2 features")
    check_importance_capability(kind, params)
    y = np.asarray(targets, dtype=np.float64)
    remaining = list(names)
    eliminated = []
    while len(remaining) > 1:
        model = RegressionModel(kind, params, seed).fit(features[remaining], y)
        worst = int(np.argmin(model.feature_importances()))
        eliminated.append(remaining.pop(worst))
    eliminated.append(remaining[0])
    return eliminated[::-1]


def cv_bucket_accuracy(features: pd.DataFrame, targets, kind, params=None, folds: int = 4,
                       seed: int = 0) -> float:
    y = np.asarray(targets, dtype=np.float64)
    assign = fold_assignments(len(y), folds, seed)
    if np.bincount(assign, minlength=folds).min() < 2:
        raise DataError(f"{len(y)} rows leave a fold with fewer than 2 samples")
    pred = np.empty_like(y)
    for f in range(folds):
        va = assign == f
        model = RegressionModel(kind, params, seed).fit(features[~va], y[~va])
        pred[va] = model.predict(features[va])
    return float(np.mean(bucket_indices(pred) == bucket_indices(y)))


@dataclass
class Selection:
    best_k: int
    selected: list
    scores: dict = field(default_factory=dict)  # k -> cross-validated bucket accuracy


def select_k(features: pd.DataFrame, targets, ranking: Sequence[str], k_max: int,
             kind=RegressorKind.GBT, params=None, cv_folds: int = 4, seed: int = 0) -> Selection:
    """Grow the top-ranked feature set one at a time; keep the k with the best CV accuracy.

    Ties go to the smaller k.
    """
    if not 1 <= k_max <= len(ranking):
        raise ConfigError(f"k_max must be in [1, {len(ranking)}], got {k_max}")
    scores = {}
    best_k, best = 1, -np.inf
    for k in range(1, k_max + 1):
        acc = cv_bucket_accuracy(features[list(ranking[:k])], targets, kind, params, cv_folds, seed)
        scores[k] = acc
        if acc > best:
            best_k, best = k, acc
    return Selection(best_k, list(ranking[:best_k]), scores)


def permutation_importance(model: RegressionModel, X: pd.DataFrame, y, repeats: int = 5,
                           seed: int = 0) -> np.ndarray:
    """Mean increase in MSE when one column is shuffled, over ``repeats`` seeded shuffles."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    base = np.mean((model.predict(X) - y) ** 2)
    arr = X.to_numpy(dtype=np.float64, copy=True) if isinstance(X, pd.DataFrame) else np.array(X, dtype=np.float64)
    columns = list(X.columns) if isinstance(X, pd.DataFrame) else None
    scores = np.zeros(arr.shape[1])
    for j in range(arr.shape[1]):
        original = arr[:, j].copy()
        for _ in range(repeats):
            arr[:, j] = rng.permutation(original)
            shuffled = pd.DataFrame(arr, columns=columns) if columns is not None else arr
            scores[j] += np.mean((model.predict(shuffled) - y) ** 2) - base
        arr[:, j] = original
    return scores / repeats
