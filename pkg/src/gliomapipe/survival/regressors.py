"""Regression model zoo for overall-survival prediction.

Gradient-boosted trees come from xgboost; the MLP, random forest and SVR
baselines from scikit-learn. All four share one wrapper so feature
selection and cross-validation can treat them uniformly.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import pandas as pd

from ..errors import CapabilityError, ConfigError, DataError


class RegressorKind(str, enum.Enum):
    GBT = "gbt"
    MLP = "mlp"
    RF = "rf"
    SVR = "svr"


@dataclass
class GBTParams:
    max_depth: int = 3
    learning_rate: float = 0.1
    n_rounds: int = 100
    alpha: float = 0.0  # L1 on leaf weights
    lam: float = 1.0  # L2 on leaf weights
    verbosity: int = 0

    def validate(self):
        if self.max_depth < 1 or self.n_rounds < 1 or not self.learning_rate > 0:
            raise ConfigError("GBT needs max_depth >= 1, n_rounds >= 1, learning_rate > 0")
        if self.alpha < 0 or self.lam < 0:
            raise ConfigError("GBT regularization weights must be nonnegative")


@dataclass
class MLPParams:
    hidden: tuple = (32, 16)
    learning_rate: float = 1e-3
    epochs: int = 300
    alpha: float = 1e-4

    def validate(self):
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("MLP hidden sizes must be positive")
        if not self.learning_rate > 0 or self.epochs < 1 or self.alpha < 0:
            raise ConfigError("MLP needs learning_rate > 0, epochs >= 1, alpha >= 0")


@dataclass
class RFParams:
    n_trees: int = 200
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1

    def validate(self):
        if self.n_trees < 1 or (self.max_depth is not None and self.max_depth < 1) or self.min_samples_leaf < 1:
            raise ConfigError("RF needs n_trees >= 1, max_depth >= 1 and min_samples_leaf >= 1")


@dataclass
class SVRParams:
    kernel: str = "rbf"
    width: float = 1.0  # RBF kernel width: gamma = 1 / (2 width^2)
    C: float = 1.0
    epsilon: float = 0.1

    def validate(self):
        if self.kernel not in ("rbf", "linear"):
            raise ConfigError(f"SVR kernel must be rbf or linear, got {self.kernel!r}")
        if not (self.width > 0 and self.C > 0 and self.epsilon >= 0):
            raise ConfigError("SVR needs width > 0, C > 0, epsilon >= 0")


PARAM_TYPES = {
    RegressorKind.GBT: GBTParams,
    RegressorKind.MLP: MLPParams,
    RegressorKind.RF: RFParams,
    RegressorKind.SVR: SVRParams,
}


def make_params(kind, overrides: Optional[dict] = None):
    kind = RegressorKind(kind)
    cls = PARAM_TYPES[kind]
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown {kind.value} hyperparameters: {sorted(unknown)}")
    if "hidden" in overrides:
        overrides["hidden"] = tuple(overrides["hidden"])
    params = cls(**overrides)
    params.validate()
    return params


def _as_matrix(X) -> np.ndarray:
    arr = X.to_numpy(dtype=np.float64) if isinstance(X, pd.DataFrame) else np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"feature matrix must be 2D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("non-finite feature value")
    return arr


class RegressionModel:
    """One fitted regressor predicting survival days (clamped at 0)."""

    def __init__(self, kind, params=None, seed: int = 0):
        self.kind = RegressorKind(kind)
        self.params = params if params is not None else make_params(self.kind)
        if isinstance(self.params, dict):
            self.params = make_params(self.kind, self.params)
        self.params.validate()
        self.seed = int(seed)
        self.feature_names: Optional[list] = None
        self._est = None
        self._y_shift = 0.0
        self._y_scale = 1.0

    def _build(self):
        p = self.params
        if self.kind is RegressorKind.GBT:
            from xgboost import XGBRegressor

            return XGBRegressor(
                n_estimators=p.n_rounds, max_depth=p.max_depth, learning_rate=p.learning_rate,
                reg_alpha=p.alpha, reg_lambda=p.lam, verbosity=p.verbosity,
                tree_method="exact", n_jobs=1, random_state=self.seed,
            )
        if self.kind is RegressorKind.MLP:
            from sklearn.neural_network import MLPRegressor

            return MLPRegressor(hidden_layer_sizes=p.hidden, learning_rate_init=p.learning_rate,
                                max_iter=p.epochs, alpha=p.alpha, random_state=self.seed)
        if self.kind is RegressorKind.RF:
            from sklearn.ensemble import RandomForestRegressor

            return RandomForestRegressor(n_estimators=p.n_trees, max_depth=p.max_depth,
                                         min_samples_leaf=p.min_samples_leaf,
                                         random_state=self.seed, n_jobs=1)
        from sklearn.svm import SVR

        if p.kernel == "linear":
            return SVR(kernel="linear", C=p.C, epsilon=p.epsilon)
        return SVR(kernel="rbf", gamma=1.0 / (2.0 * p.width ** 2), C=p.C, epsilon=p.epsilon)

    @property
    def _standardizes_target(self) -> bool:
        return self.kind in (RegressorKind.MLP, RegressorKind.SVR)

    def fit(self, X, y) -> "RegressionModel":
        arr = _as_matrix(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if arr.shape[0] != y.shape[0]:
            raise DataError(f"{arr.shape[0]} feature rows but {y.shape[0]} targets")
        if not np.all(np.isfinite(y)):
            raise DataError("non-finite target value")
        self.feature_names = list(X.columns) if isinstance(X, pd.DataFrame) else None
        if self._standardizes_target:
            self._y_shift = float(y.mean())
            self._y_scale = float(y.std()) or 1.0
        target = (y - self._y_shift) / self._y_scale
        self._est = self._build()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # sklearn convergence chatter on tiny cohorts
            self._est.fit(arr, target)
        return self

    def predict(self, X) -> np.ndarray:
        if self._est is None:
            raise DataError("model is not fitted")
        raw = np.asarray(self._est.predict(_as_matrix(X)), dtype=np.float64)
        return np.clip(raw * self._y_scale + self._y_shift, 0.0, None)

    @property
    def has_importances(self) -> bool:
        return not (self.kind is RegressorKind.SVR and self.params.kernel != "linear")

    def feature_importances(self) -> np.ndarray:
        """Split-gain totals (GBT), impurity decrease (RF), input-weight norms (MLP), |coef| (linear SVR)."""
        if self._est is None:
            raise DataError("model is not fitted")
        if not self.has_importances:
            raise CapabilityError("RBF-kernel SVR exposes no feature importances; use a linear kernel")
        n = self._est.n_features_in_
        if self.kind is RegressorKind.GBT:
            scores = self._est.get_booster().get_score(importance_type="total_gain")
            return np.array([scores.get(f"f{i}", 0.0) for i in range(n)], dtype=np.float64)
        if self.kind is RegressorKind.RF:
            return np.asarray(self._est.feature_importances_, dtype=np.float64)
        if self.kind is RegressorKind.MLP:
            return np.linalg.norm(self._est.coefs_[0], axis=1)
        return np.abs(np.asarray(self._est.coef_, dtype=np.float64)).ravel()

    def describe(self) -> dict:
        return {"kind": self.kind.value, "params": asdict(self.params), "seed": self.seed,
                "features": self.feature_names}


def check_importance_capability(kind, params=None):
    model = RegressionModel(kind, params)
    if not model.has_importances:
        raise CapabilityError(f"{model.kind.value} with kernel {model.params.kernel!r} has no feature importances")
