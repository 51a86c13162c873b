"""Dataset manifests tying case ids to raw-format directories or NIfTI files.

``manifest.json``::

    {"version": 1,
     "cases": [{"case_id": "c1", "path": "cases/c1", "split": "train"},
               {"case_id": "c2", "images": ["t1.nii.gz", "t1gd.nii.gz", "t2.nii.gz", "flair.nii.gz"],
                "label": "seg.nii.gz", "split": "val"}]}

Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .data import load_case, load_raw_case
from .errors import DataError, IoError

MANIFEST = "manifest.json"


@dataclass
class CaseEntry:
    case_id: str
    root: Path
    path: Optional[str] = None
    images: list = field(default_factory=list)
    label: Optional[str] = None
    split: str = "train"

    def load(self):
        """(MultiModalVolume or None, LabelVolume or None)."""
        if self.path is not None:
            return load_raw_case(self.root / self.path)
        images = [self.root / p for p in self.images]
        label = self.root / self.label if self.label else None
        return load_case(images, label, self.case_id)

    def to_dict(self) -> dict:
        d = {"case_id": self.case_id, "split": self.split}
        if self.path is not None:
            d["path"] = self.path
        else:
            d["images"] = list(self.images)
            if self.label:
                d["label"] = self.label
        return d


def manifest_path(location) -> Path:
    location = Path(location)
    return location / MANIFEST if location.is_dir() else location


def read_manifest(location) -> list:
    path = manifest_path(location)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}") from exc
    entries = []
    for item in data.get("cases", []):
        if "case_id" not in item or not ("path" in item or "images" in item):
            raise DataError(f"{path}: each case needs case_id and path or images")
        entries.append(CaseEntry(item["case_id"], path.parent, item.get("path"), item.get("images", []),
                                 item.get("label"), item.get("split", "train")))
    return entries


def write_manifest(directory, entries):
    directory = Path(directory)
    payload = {"version": 1, "cases": [e.to_dict() for e in entries]}
    try:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / MANIFEST).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write manifest in {directory}: {exc}") from exc
