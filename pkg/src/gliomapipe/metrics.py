"""BraTS-style segmentation metrics per evaluation region, and cohort aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .data import LabelVolume, Region, region_mask
from .errors import DataError, ShapeError

EVAL_REGIONS = (Region.ET, Region.WT, Region.TC)
METRICS = ("dice", "hd95", "sensitivity", "specificity")
METRIC_TITLES = {"dice": "Dice", "hd95": "Hausdorff", "sensitivity": "Sensitivity", "specificity": "Specificity"}
_SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def dice(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, gt).sum()) / total


def sensitivity(pred, gt) -> float:
    """TP / (TP + FN). With no positives in ``gt``: 1.0 if ``pred`` is empty too, else 0.0."""
    pred, gt = _pair(pred, gt)
    positives = int(gt.sum())
    if positives == 0:
        return 1.0 if not pred.any() else 0.0
    return int(np.logical_and(pred, gt).sum()) / positives


def specificity(pred, gt) -> float:
    """TN / (TN + FP); the no-negatives case mirrors :func:`sensitivity`."""
    pred, gt = _pair(pred, gt)
    return sensitivity(~pred, ~gt)


def boundary(mask: np.ndarray) -> np.ndarray:
    """Mask voxels with at least one 6-neighbour outside the mask (grid edge counts as outside)."""
    return mask & ~ndimage.binary_erosion(mask, structure=_SIX_CONNECTED, border_value=0)


def volume_diagonal(shape, spacing) -> float:
    return float(np.sqrt(sum((n * s) ** 2 for n, s in zip(shape, spacing))))


def surface_distances(pred, gt, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Pooled directed distances pred-boundary -> gt-boundary and gt-boundary -> pred-boundary, in mm."""
    bp, bg = boundary(pred), boundary(gt)
    to_gt = ndimage.distance_transform_edt(~bg, sampling=spacing)
    to_pred = ndimage.distance_transform_edt(~bp, sampling=spacing)
    return np.concatenate([to_gt[bp], to_pred[bg]])


def hausdorff_distance(pred, gt, spacing=(1.0, 1.0, 1.0), percentile: float = 95.0,
                       empty_penalty: Optional[float] = None) -> float:
    """Percentile of the symmetric boundary distance set (100 gives the classic max Hausdorff).

    One empty mask yields ``empty_penalty``, by default the volume diagonal in mm;
    two empty masks yield 0.
    """
    pred, gt = _pair(pred, gt)
    p_any, g_any = pred.any(), gt.any()
    if not p_any and not g_any:
        return 0.0
    if p_any != g_any:
        return volume_diagonal(pred.shape, spacing) if empty_penalty is None else float(empty_penalty)
    dists = surface_distances(pred, gt, spacing)
    return float(np.percentile(dists, percentile))


def hausdorff95(pred, gt, spacing=(1.0, 1.0, 1.0), empty_penalty: Optional[float] = None) -> float:
    return hausdorff_distance(pred, gt, spacing, 95.0, empty_penalty)


@dataclass
class RegionMetrics:
    dice: float
    hd95: float
    sensitivity: float
    specificity: float


@dataclass
class SegCaseMetrics:
    case_id: str
    regions: dict = field(default_factory=dict)  # Region -> RegionMetrics

    def value(self, metric: str, region: Region) -> float:
        return getattr(self.regions[Region(region)], metric)

    def as_row(self) -> dict:
        row = {"case_id": self.case_id}
        row.update({column: self.value(m, r) for column, m, r in metric_columns()})
        return row


def metric_columns():
    """(column name, metric, region) metric-major, regions ET, WT, TC."""
    return [(f"{m}_{r.value}", m, r) for m in METRICS for r in EVAL_REGIONS]


def evaluate_case(pred: LabelVolume, gt: LabelVolume, spacing=(1.0, 1.0, 1.0),
                  hd_percentile: float = 95.0) -> SegCaseMetrics:
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    out = SegCaseMetrics(gt.case_id or pred.case_id)
    for region in EVAL_REGIONS:
        p, g = region_mask(pred, region), region_mask(gt, region)
        out.regions[region] = RegionMetrics(
            dice=dice(p, g),
            hd95=hausdorff_distance(p, g, spacing, hd_percentile),
            sensitivity=sensitivity(p, g),
            specificity=specificity(p, g),
        )
    return out


STATISTICS = ("Mean", "StdDev", "Median")


@dataclass
class CohortSummary:
    """stats[statistic][column] for statistic in Mean/StdDev/Median."""

    stats: dict
    n_cases: int

    def row(self, statistic: str) -> list:
        return [self.stats[statistic][c] for c, _, _ in metric_columns()]

    def to_rows(self) -> list:
        cols = [c for c, _, _ in metric_columns()]
        return [{"statistic": s, **{c: self.stats[s][c] for c in cols}} for s in STATISTICS]

    def render(self, digits: int = 3) -> str:
        """Plain-text table laid out like the usual BraTS report: metric groups over ET WT TC."""
        cell = max(digits + 4, 7)
        stub = 8
        group = cell * len(EVAL_REGIONS)
        lines = [
            " " * stub + "".join(f"|{METRIC_TITLES[m]:^{group - 1}}" for m in METRICS),
            " " * stub + "".join(f"|{r.name:>{cell - 1}}" for _ in METRICS for r in EVAL_REGIONS),
        ]
        for s in STATISTICS:
            lines.append(f"{s:<{stub}}" + "".join(f"|{v:>{cell - 1}.{digits}f}" for v in self.row(s)))
        return "\n".join(lines) + "\n"


def summarize_cohort(cases: Sequence[SegCaseMetrics]) -> CohortSummary:
    if not cases:
        raise DataError("cannot summarize an empty cohort")
    stats = {s: {} for s in STATISTICS}
    for column, metric, region in metric_columns():
        vals = np.array([c.value(metric, region) for c in cases], dtype=float)
        stats["Mean"][column] = float(vals.mean())
        stats["StdDev"][column] = float(vals.std())
        stats["Median"][column] = float(np.median(vals))
    return CohortSummary(stats, len(cases))
