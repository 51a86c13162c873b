from .evaluation import BUCKETS, OsEvaluation, bucketize, evaluate_os, spearman_r
from .records import SurvivalRecord, read_survival_csv, write_survival_csv
from .regressors import RegressionModel, RegressorKind, make_params
from .selection import Selection, fold_assignments, permutation_importance, rfe_rank, select_k
from .validation import (
    CVResult,
    SurvivalPipeline,
    cross_validate,
    fit_pipeline,
    tune_hyperparameters,
)

__all__ = [
    "BUCKETS",
    "CVResult",
    "OsEvaluation",
    "RegressionModel",
    "RegressorKind",
    "Selection",
    "SurvivalPipeline",
    "SurvivalRecord",
    "bucketize",
    "cross_validate",
    "evaluate_os",
    "fit_pipeline",
    "fold_assignments",
    "make_params",
    "permutation_importance",
    "read_survival_csv",
    "rfe_rank",
    "select_k",
    "spearman_r",
    "tune_hyperparameters",
    "write_survival_csv",
]
