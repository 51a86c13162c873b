"""Geometric, fractal and histogram features of tumor sub-regions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .data import LabelVolume, MultiModalVolume, Region, region_mask
from .errors import DataError, EmptyRegionError, IoError

FEATURE_REGIONS = (Region.NCR, Region.TC, Region.WT)
HISTOGRAM_BINS = 32


@dataclass
class PrincipalAxes:
    centroid: np.ndarray  # (3,) mm
    eigenvalues: np.ndarray  # (3,) descending, mm^2
    axis_lengths: np.ndarray  # (3,) full lengths, mm
    directions: np.ndarray  # (3, 3); column i belongs to eigenvalue i


def principal_axes(mask: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> PrincipalAxes:
    """Centroid and second-moment ellipsoid of the voxel centers in ``mask``.

    A solid ellipsoid with semi-axis ``a`` has variance ``a**2 / 5`` along it,
    so each full axis length is ``2 * sqrt(5 * eigenvalue)``.
    """
    coords = np.argwhere(mask).astype(np.float64)
    if coords.shape[0] == 0:
        raise EmptyRegionError("principal_axes of an empty mask")
    coords *= np.asarray(spacing, dtype=np.float64)
    centroid = coords.mean(axis=0)
    centered = coords - centroid
    cov = centered.T @ centered / coords.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    return PrincipalAxes(centroid, evals, 2.0 * np.sqrt(5.0 * evals), evecs[:, order])


def eccentricities(axis_lengths) -> tuple:
    """(meridional, equatorial) = (sqrt(a^2 - c^2) / a, sqrt(a^2 - b^2) / a) for a >= b >= c."""
    a, b, c = sorted((float(x) for x in axis_lengths), reverse=True)
    if a <= 0:
        raise EmptyRegionError("eccentricity undefined for a zero-length major axis")
    meridional = np.sqrt(max(a * a - c * c, 0.0)) / a
    equatorial = np.sqrt(max(a * a - b * b, 0.0)) / a
    return float(meridional), float(equatorial)


def box_counts(mask: np.ndarray) -> tuple:
    """Box sizes 2^m .. 1 and occupied-box counts over the mask's bounding box padded to a 2^m cube."""
    mask = np.asarray(mask, dtype=bool)
    idx = np.argwhere(mask)
    if idx.shape[0] == 0:
        raise EmptyRegionError("fractal dimension of an empty mask")
    lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
    tight = mask[tuple(slice(a, b) for a, b in zip(lo, hi))]
    side = 1 << int(np.ceil(np.log2(max(tight.shape))))
    cube = np.zeros((side,) * mask.ndim, dtype=bool)
    cube[tuple(slice(0, n) for n in tight.shape)] = tight
    sizes, counts = [], []
    s = side
    while s >= 1:
        n = side // s
        blocks = cube.reshape(n, s, n, s, n, s).any(axis=(1, 3, 5))
        sizes.append(s)
        counts.append(int(blocks.sum()))
        s //= 2
    return np.array(sizes), np.array(counts)


def fractal_dimension(mask: np.ndarray) -> float:
    """Box-counting dimension: least-squares slope of log N(s) against log(1/s)."""
    sizes, counts = box_counts(mask)
    if len(sizes) < 2:
        return 0.0
    slope = np.polyfit(np.log(1.0 / sizes), np.log(counts), 1)[0]
    return float(slope)


def histogram_stats(values, bins: int = HISTOGRAM_BINS) -> tuple:
    """(entropy in bits, skewness, non-excess kurtosis) of a sample.

    Entropy uses ``bins`` equal-width bins spanning the sample's range. A
    constant sample returns (0, 0, 0).
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyRegionError("histogram of an empty region")
    lo, hi = x.min(), x.max()
    if lo == hi:
        return 0.0, 0.0, 0.0
    counts, _ = np.histogram(x, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / x.size
    entropy = float(-(p * np.log2(p)).sum())
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    m3 = np.mean(d ** 3)
    m4 = np.mean(d ** 4)
    if m2 == 0:
        return entropy, 0.0, 0.0
    return entropy, float(m3 / m2 ** 1.5), float(m4 / m2 ** 2)


# --------------------------------------------------------------------------
# per-case feature vectors

REGION_FEATURES = (
    "present", "volume",
    "centroid_0", "centroid_1", "centroid_2",
    "axis_length_1", "axis_length_2", "axis_length_3",
    "eigenvalue_1", "eigenvalue_2", "eigenvalue_3",
    "ecc_meridional", "ecc_equatorial",
    "fractal_dim",
    "hist_entropy", "hist_skewness", "hist_kurtosis",
)
DIRECTION_FEATURES = tuple(f"axis{i}_dir_{j}" for i in (1, 2, 3) for j in range(3))


@dataclass
class FeatureOptions:
    modality: str = "t1gd"
    include_resection: bool = False
    include_axis_directions: bool = False
    bins: int = HISTOGRAM_BINS


def feature_names(options: FeatureOptions = FeatureOptions()) -> list:
    per_region = REGION_FEATURES + (DIRECTION_FEATURES if options.include_axis_directions else ())
    names = [f"{r.value}_{f}" for r in FEATURE_REGIONS for f in per_region]
    names.append("age")
    if options.include_resection:
        names.append("resection_gtr")
    return names


@dataclass
class FeatureVector:
    case_id: str
    values: dict = field(default_factory=dict)  # insertion-ordered name -> float

    @property
    def names(self) -> list:
        return list(self.values)

    def to_array(self) -> np.ndarray:
        return np.array(list(self.values.values()), dtype=np.float64)


def region_features(volume: MultiModalVolume, mask: np.ndarray, options: FeatureOptions) -> dict:
    out = {}
    if not mask.any():
        out = {f: 0.0 for f in REGION_FEATURES}
        if options.include_axis_directions:
            out.update({f: 0.0 for f in DIRECTION_FEATURES})
        return out
    axes = principal_axes(mask, volume.spacing)
    out["present"] = 1.0
    out["volume"] = float(mask.sum() * np.prod(volume.spacing))
    for i in range(3):
        out[f"centroid_{i}"] = float(axes.centroid[i])
    for i in range(3):
        out[f"axis_length_{i + 1}"] = float(axes.axis_lengths[i])
    for i in range(3):
        out[f"eigenvalue_{i + 1}"] = float(axes.eigenvalues[i])
    if axes.axis_lengths[0] > 0:
        out["ecc_meridional"], out["ecc_equatorial"] = eccentricities(axes.axis_lengths)
    else:
        out["ecc_meridional"] = out["ecc_equatorial"] = 0.0
    out["fractal_dim"] = fractal_dimension(mask)
    ent, skew, kurt = histogram_stats(volume.modality(options.modality)[mask], options.bins)
    out["hist_entropy"], out["hist_skewness"], out["hist_kurtosis"] = ent, skew, kurt
    if options.include_axis_directions:
        for i in range(3):
            for j in range(3):
                out[f"axis{i + 1}_dir_{j}"] = float(axes.directions[j, i])
    return out


def extract_case_features(volume: MultiModalVolume, label: LabelVolume, clinical,
                          options: FeatureOptions = FeatureOptions()) -> FeatureVector:
    """Per-region features for NCR, TC and WT, followed by the clinical features.

    ``clinical`` is a SurvivalRecord (anything with ``age`` and
    ``resection_status``). A region absent from the label gets zeros and
    ``<region>_present = 0``.
    """
    masks = {r: region_mask(label, r) for r in FEATURE_REGIONS}
    if not any(m.any() for m in masks.values()):
        raise EmptyRegionError(f"case {label.case_id!r}: no tumor voxels")
    values = {}
    for region in FEATURE_REGIONS:
        for name, v in region_features(volume, masks[region], options).items():
            values[f"{region.value}_{name}"] = v
    values["age"] = float(clinical.age)
    if options.include_resection:
        values["resection_gtr"] = 1.0 if str(getattr(clinical, "resection_status", "") or "").upper() == "GTR" else 0.0
    ordered = {n: values[n] for n in feature_names(options)}
    return FeatureVector(label.case_id or volume.case_id, ordered)


def feature_table(vectors: Sequence[FeatureVector]) -> pd.DataFrame:
    if not vectors:
        raise DataError("no feature vectors")
    names = vectors[0].names
    for v in vectors[1:]:
        if v.names != names:
            raise DataError(f"case {v.case_id!r}: feature names differ from {vectors[0].case_id!r}")
    df = pd.DataFrame([v.values for v in vectors], index=[v.case_id for v in vectors], columns=names)
    df.index.name = "case_id"
    return df


# --------------------------------------------------------------------------
# min-max scaling


@dataclass
class FeatureScaler:
    mins: dict
    maxs: dict

    @property
    def names(self) -> list:
        return list(self.mins)

    def to_json(self) -> str:
        return json.dumps({n: {"min": self.mins[n], "max": self.maxs[n]} for n in self.names}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FeatureScaler":
        d = json.loads(text)
        return cls({n: float(v["min"]) for n, v in d.items()}, {n: float(v["max"]) for n, v in d.items()})

    def save(self, path):
        try:
            Path(path).write_text(self.to_json())
        except OSError as exc:
            raise IoError(f"cannot write scaler {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "FeatureScaler":
        try:
            return cls.from_json(Path(path).read_text())
        except OSError as exc:
            raise IoError(f"cannot read scaler {path}: {exc}") from exc


def fit_scaler(table: pd.DataFrame) -> FeatureScaler:
    if table.shape[0] == 0:
        raise DataError("cannot fit a scaler on an empty table")
    return FeatureScaler({c: float(table[c].min()) for c in table.columns},
                         {c: float(table[c].max()) for c in table.columns})


def apply_scaler(data, scaler: FeatureScaler):
    """Min-max scale into [0, 1] with clamping; constant training features map to 0.5.

    Accepts a DataFrame (columns selected by name), a FeatureVector or a
    plain name -> value mapping.
    """
    if isinstance(data, pd.DataFrame):
        missing = [n for n in scaler.names if n not in data.columns]
        if missing:
            raise DataError(f"table lacks scaled features {missing}")
        out = data[scaler.names].astype(np.float64).copy()
        for n in scaler.names:
            out[n] = _scale(out[n].to_numpy(), scaler.mins[n], scaler.maxs[n])
        return out
    if isinstance(data, FeatureVector):
        return FeatureVector(data.case_id, apply_scaler(data.values, scaler))
    return {n: float(_scale(np.asarray(data[n], dtype=np.float64), scaler.mins[n], scaler.maxs[n]))
            for n in scaler.names}


def _scale(x, lo, hi):
    if hi == lo:
        return np.full_like(x, 0.5, dtype=np.float64)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)
