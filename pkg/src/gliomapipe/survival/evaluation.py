from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import DataError

BUCKETS = ("short", "mid", "long")
SHORT_BELOW = 300.0
LONG_ABOVE = 450.0

# Column order of the survival comparison table.
OS_COLUMNS = ("accuracy", "mse", "median_se", "std_se", "spearman_r")
OS_HEADERS = {"accuracy": "Accuracy", "mse": "MSE", "median_se": "MedianSE", "std_se": "stdSE",
              "spearman_r": "SpearmanR"}


def bucketize(days: float, short_below: float = SHORT_BELOW, long_above: float = LONG_ABOVE) -> str:
    """short: < 300 days, mid: 300..450 inclusive, long: > 450."""
    days = float(days)
    if not days >= 0:
        raise DataError(f"survival must be nonnegative, got {days}")
    if days < short_below:
        return "short"
    if days <= long_above:
        return "mid"
    return "long"


def bucket_indices(days, short_below: float = SHORT_BELOW, long_above: float = LONG_ABOVE) -> np.ndarray:
    return np.array([BUCKETS.index(bucketize(d, short_below, long_above)) for d in np.ravel(days)])


def spearman_r(a, b) -> float:
    """Pearson correlation of average ranks; 0.0 when either side is constant."""
    ra = rankdata(a) - (len(a) + 1) / 2.0
    rb = rankdata(b) - (len(b) + 1) / 2.0
    denom = np.sqrt((ra @ ra) * (rb @ rb))
    if denom == 0:
        return 0.0
    return float(np.clip((ra @ rb) / denom, -1.0, 1.0))


@dataclass
class OsEvaluation:
    accuracy: float
    mse: float
    median_se: float
    std_se: float
    spearman_r: float

    def as_row(self) -> dict:
        return {OS_HEADERS[c]: getattr(self, c) for c in OS_COLUMNS}

    @classmethod
    def mean_of(cls, evals) -> "OsEvaluation":
        evals = list(evals)
        if not evals:
            raise DataError("no evaluations to aggregate")
        return cls(**{c: float(np.mean([getattr(e, c) for e in evals])) for c in OS_COLUMNS})

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_os(pred_days, true_days, short_below: float = SHORT_BELOW,
                long_above: float = LONG_ABOVE) -> OsEvaluation:
    pred = np.asarray(pred_days, dtype=np.float64).ravel()
    true = np.asarray(true_days, dtype=np.float64).ravel()
    if pred.shape != true.shape:
        raise DataError(f"{pred.size} predictions vs {true.size} ground-truth values")
    if pred.size < 2:
        raise DataError("need at least 2 cases to evaluate survival predictions")
    se = (pred - true) ** 2
    acc = np.mean(bucket_indices(pred, short_below, long_above) == bucket_indices(true, short_below, long_above))
    return OsEvaluation(
        accuracy=float(acc),
        mse=float(se.mean()),
        median_se=float(np.median(se)),
        std_se=float(se.std()),
        spearman_r=spearman_r(pred, true),
    )
