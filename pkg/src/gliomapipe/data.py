"""Volume data model, ingestion, preprocessing and synthetic phantoms."""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import CropError, IngestError, IoError, LabelError, SpecError

MODALITIES = ("t1", "t1gd", "t2", "flair")
LABEL_VALUES = (0, 1, 2, 4)
RAW_FORMAT_VERSION = 1


class Region(str, enum.Enum):
    NCR = "ncr"
    ED = "ed"
    ET = "et"
    TC = "tc"
    WT = "wt"


REGION_LABELS = {
    Region.NCR: (1,),
    Region.ED: (2,),
    Region.ET: (4,),
    Region.TC: (1, 4),
    Region.WT: (1, 2, 4),
}


@dataclass
class MultiModalVolume:
    """Four co-registered MR modalities on one grid, ordered T1, T1Gd, T2, FLAIR."""

    intensities: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    case_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.intensities)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        if arr.ndim != 4 or arr.shape[0] != len(MODALITIES):
            raise IngestError(f"expected 4xDxHxW intensities, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise IngestError(f"case {self.case_id!r}: non-finite intensities")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise IngestError(f"spacing must be 3 positive reals, got {self.spacing}")
        self.intensities = arr
        self.spacing = spacing

    @property
    def shape(self) -> tuple:
        return tuple(self.intensities.shape[1:])

    def modality(self, name: str) -> np.ndarray:
        return self.intensities[MODALITIES.index(name.lower())]


@dataclass
class LabelVolume:
    labels: np.ndarray
    case_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 3:
            raise LabelError(f"label grid must be 3D, got shape {arr.shape}")
        if np.issubdtype(arr.dtype, np.floating):
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise LabelError(f"case {self.case_id!r}: non-integer label values")
        bad = np.setdiff1d(np.unique(arr), LABEL_VALUES)
        if bad.size:
            raise LabelError(f"case {self.case_id!r}: label values {bad.tolist()} outside {{0,1,2,4}}")
        self.labels = arr.astype(np.uint8)

    @property
    def shape(self) -> tuple:
        return tuple(self.labels.shape)


def region_mask(label: LabelVolume | np.ndarray, region: Region | str) -> np.ndarray:
    grid = label.labels if isinstance(label, LabelVolume) else np.asarray(label)
    return np.isin(grid, REGION_LABELS[Region(region)])


# --------------------------------------------------------------------------
# ingestion


def _read_nifti(path):
    import nibabel as nib

    try:
        img = nib.load(os.fspath(path))
        data = np.asanyarray(img.dataobj)
    except FileNotFoundError as exc:
        raise IoError(f"no such file: {path}") from exc
    except Exception as exc:  # nibabel raises a zoo of types for corrupt files
        raise IoError(f"cannot read NIfTI file {path}: {exc}") from exc
    if data.ndim == 4 and data.shape[3] == 1:
        data = data[..., 0]
    if data.ndim != 3:
        raise IngestError(f"{path}: expected a 3D volume, got shape {data.shape}")
    spacing = tuple(float(z) for z in img.header.get_zooms()[:3])
    return data, spacing


def load_case(image_paths: Sequence, label_path=None, case_id: Optional[str] = None):
    """Read four modality files (T1, T1Gd, T2, FLAIR) and an optional label file.

    Files are NIfTI-1 (``.nii`` or ``.nii.gz``); spacing comes from the first
    modality's header.
    """
    if len(image_paths) != len(MODALITIES):
        raise IngestError(f"expected {len(MODALITIES)} modality paths, got {len(image_paths)}")
    if case_id is None:
        case_id = Path(image_paths[0]).name.split(".")[0]
    grids, spacing = [], None
    for path in image_paths:
        data, sp = _read_nifti(path)
        if grids and data.shape != grids[0].shape:
            raise IngestError(f"{path}: shape {data.shape} differs from {grids[0].shape}")
        spacing = spacing or sp
        grids.append(data)
    dtype = np.result_type(*[g.dtype for g in grids])
    if not np.issubdtype(dtype, np.floating):
        dtype = np.float32
    volume = MultiModalVolume(np.stack(grids).astype(dtype, copy=False), spacing, case_id)
    label = None
    if label_path is not None:
        data, _ = _read_nifti(label_path)
        if data.shape != volume.shape:
            raise IngestError(f"{label_path}: label shape {data.shape} differs from {volume.shape}")
        label = LabelVolume(data, case_id)
    return volume, label


def save_nifti(grid: np.ndarray, spacing, path):
    import nibabel as nib

    img = nib.Nifti1Image(np.asarray(grid), affine=np.diag([*spacing, 1.0]))
    img.header.set_zooms(tuple(spacing))
    try:
        nib.save(img, os.fspath(path))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def save_case_nifti(volume: MultiModalVolume, label: Optional[LabelVolume], directory):
    """Write one NIfTI file per modality (plus ``seg``); returns (image paths, label path)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, grid in zip(MODALITIES, volume.intensities):
        path = directory / f"{volume.case_id}_{name}.nii.gz"
        save_nifti(grid, volume.spacing, path)
        paths.append(path)
    label_path = None
    if label is not None:
        label_path = directory / f"{volume.case_id}_seg.nii.gz"
        save_nifti(label.labels, volume.spacing, label_path)
    return paths, label_path


# Raw format: <dir>/case.json sidecar plus little-endian image.bin / label.bin.


def save_raw_case(directory, volume: Optional[MultiModalVolume], label: Optional[LabelVolume] = None,
                  spacing=None):
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {directory}: {exc}") from exc
    if volume is None and label is None:
        raise IngestError("nothing to save")
    ref = volume if volume is not None else label
    meta = {
        "version": RAW_FORMAT_VERSION,
        "case_id": ref.case_id,
        "dims": list(ref.shape),
        "spacing": list(volume.spacing if volume is not None else (spacing or (1.0, 1.0, 1.0))),
        "modality_order": list(MODALITIES),
        "image": None,
        "label": None,
    }
    try:
        if volume is not None:
            dtype = np.dtype(volume.intensities.dtype).newbyteorder("<")
            meta["image"] = {"file": "image.bin", "dtype": dtype.str}
            (directory / "image.bin").write_bytes(volume.intensities.astype(dtype).tobytes(order="C"))
        if label is not None:
            meta["label"] = {"file": "label.bin", "dtype": "|u1"}
            (directory / "label.bin").write_bytes(label.labels.astype(np.uint8).tobytes(order="C"))
        (directory / "case.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write raw case to {directory}: {exc}") from exc


def load_raw_case(directory):
    directory = Path(directory)
    try:
        meta = json.loads((directory / "case.json").read_text())
    except OSError as exc:
        raise IoError(f"cannot read {directory / 'case.json'}: {exc}") from exc
    dims = tuple(meta["dims"])
    volume = label = None
    try:
        if meta.get("image"):
            raw = (directory / meta["image"]["file"]).read_bytes()
            arr = np.frombuffer(raw, dtype=np.dtype(meta["image"]["dtype"]))
            if arr.size != len(MODALITIES) * int(np.prod(dims)):
                raise IngestError(f"{directory}: image size does not match dims {dims}")
            arr = arr.reshape((len(MODALITIES), *dims)).astype(arr.dtype.newbyteorder("="))
            volume = MultiModalVolume(arr, tuple(meta["spacing"]), meta["case_id"])
        if meta.get("label"):
            raw = (directory / meta["label"]["file"]).read_bytes()
            arr = np.frombuffer(raw, dtype=np.dtype(meta["label"]["dtype"]))
            if arr.size != int(np.prod(dims)):
                raise IngestError(f"{directory}: label size does not match dims {dims}")
            label = LabelVolume(arr.reshape(dims).copy(), meta["case_id"])
    except OSError as exc:
        raise IoError(f"cannot read raw case {directory}: {exc}") from exc
    return volume, label


# --------------------------------------------------------------------------
# preprocessing


def random_crop(volume: MultiModalVolume, label: Optional[LabelVolume], crop_dims, seed: int):
    """Crop image and label with one offset drawn uniformly over the valid offsets."""
    crop_dims = tuple(int(c) for c in crop_dims)
    shape = volume.shape
    if len(crop_dims) != 3 or any(c < 1 for c in crop_dims):
        raise CropError(f"invalid crop dims {crop_dims}")
    for axis, (c, n) in enumerate(zip(crop_dims, shape)):
        if c > n:
            raise CropError(f"crop {crop_dims} larger than volume {shape} on axis {axis}")
    offset = crop_offset(shape, crop_dims, seed)
    sl = tuple(slice(o, o + c) for o, c in zip(offset, crop_dims))
    out_vol = MultiModalVolume(volume.intensities[(slice(None), *sl)].copy(), volume.spacing, volume.case_id)
    out_lab = None if label is None else LabelVolume(label.labels[sl].copy(), label.case_id)
    return out_vol, out_lab


def crop_offset(shape, crop_dims, seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    return tuple(int(rng.integers(0, n - c + 1)) for n, c in zip(shape, crop_dims))


def mean_normalize(volume: MultiModalVolume) -> MultiModalVolume:
    """Z-score each modality over its nonzero (brain) voxels; background stays 0."""
    out = volume.intensities.copy()
    for m in range(out.shape[0]):
        grid = out[m]
        brain = grid != 0
        if not brain.any():
            continue
        vals = grid[brain].astype(np.float64)
        mean = vals.mean()
        sd = vals.std()
        # a constant modality can leave round-off in the std; map it to 0
        if sd <= 1e-12 * max(1.0, abs(mean)):
            grid[brain] = 0
            continue
        grid[brain] = ((vals - mean) / sd).astype(grid.dtype)
    return MultiModalVolume(out, volume.spacing, volume.case_id)


# --------------------------------------------------------------------------
# phantoms

# Base intensity per modality (rows: T1, T1Gd, T2, FLAIR) and tissue
# (columns: healthy, NCR, ED, ET).
TISSUE_LEVELS = np.array([
    [0.60, 0.30, 0.50, 0.55],
    [0.60, 0.25, 0.50, 1.00],
    [0.50, 0.90, 0.80, 0.60],
    [0.50, 0.60, 0.95, 0.70],
])


@dataclass
class PhantomSpec:
    """Axis-aligned nested ellipsoids: NCR core inside the TC extent inside the WT extent.

    Semi-axes and center are in voxel units; the center defaults to the grid
    center. ``ncr_axes=None`` leaves the core without necrosis.
    """

    seed: int = 0
    dims: tuple = (32, 32, 32)
    ncr_axes: Optional[tuple] = (3.0, 3.0, 3.0)
    tc_axes: tuple = (5.0, 5.0, 5.0)
    wt_axes: tuple = (8.0, 8.0, 8.0)
    center: Optional[tuple] = None
    noise_sigma: float = 0.0
    spacing: tuple = (1.0, 1.0, 1.0)
    case_id: str = field(default="")

    def validate(self):
        if len(self.dims) != 3 or any(int(d) < 8 for d in self.dims):
            raise SpecError(f"phantom dims must be >= 8 per axis, got {self.dims}")
        for name in ("ncr_axes", "tc_axes", "wt_axes", "spacing"):
            vals = getattr(self, name)
            if vals is None and name == "ncr_axes":
                continue
            if vals is None or len(vals) != 3 or any(v <= 0 for v in vals):
                raise SpecError(f"{name} must be 3 positive reals, got {vals}")
        if self.noise_sigma < 0:
            raise SpecError("noise_sigma must be nonnegative")
        if self.center is not None and len(self.center) != 3:
            raise SpecError(f"center must have 3 components, got {self.center}")
        # Concentric axis-aligned ellipsoids nest iff their semi-axes do.
        if self.ncr_axes is not None and any(n > t for n, t in zip(self.ncr_axes, self.tc_axes)):
            raise SpecError(f"NCR axes {self.ncr_axes} exceed TC axes {self.tc_axes}")
        if any(t > w for t, w in zip(self.tc_axes, self.wt_axes)):
            raise SpecError(f"TC axes {self.tc_axes} exceed WT axes {self.wt_axes}")

    def resolved_center(self) -> tuple:
        if self.center is not None:
            return tuple(float(c) for c in self.center)
        return tuple((int(d) - 1) / 2.0 for d in self.dims)


def ellipsoid_mask(dims, center, semi_axes) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, int(d)) for d in dims)]
    r2 = sum(((g - c) / a) ** 2 for g, c, a in zip(grids, center, semi_axes))
    return r2 <= 1.0


def generate_phantom(spec: PhantomSpec):
    spec.validate()
    dims = tuple(int(d) for d in spec.dims)
    center = spec.resolved_center()
    wt = ellipsoid_mask(dims, center, spec.wt_axes)
    tc = ellipsoid_mask(dims, center, spec.tc_axes)
    labels = np.zeros(dims, dtype=np.uint8)
    labels[wt] = 2
    labels[tc] = 4
    if spec.ncr_axes is not None:
        labels[ellipsoid_mask(dims, center, spec.ncr_axes)] = 1

    tissue = np.zeros(dims, dtype=np.intp)
    tissue[labels == 1] = 1
    tissue[labels == 2] = 2
    tissue[labels == 4] = 3
    image = TISSUE_LEVELS[:, tissue]
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
    case_id = spec.case_id or f"phantom_{spec.seed:04d}"
    volume = MultiModalVolume(image.astype(np.float32), spec.spacing, case_id)
    return volume, LabelVolume(labels, case_id)
