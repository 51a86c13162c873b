from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..errors import DataError, IoError

RESECTION_STATUSES = ("GTR", "STR", "NA")


@dataclass
class SurvivalRecord:
    case_id: str
    age: float
    survival_days: Optional[float] = None
    resection_status: Optional[str] = None

    def __post_init__(self):
        self.age = float(self.age)
        if not self.age > 0:
            raise DataError(f"case {self.case_id!r}: age must be positive, got {self.age}")
        if self.survival_days is not None:
            self.survival_days = float(self.survival_days)
            if self.survival_days < 0:
                raise DataError(f"case {self.case_id!r}: negative survival {self.survival_days}")
        if self.resection_status in ("", None):
            self.resection_status = None
        else:
            status = str(self.resection_status).upper()
            if status not in RESECTION_STATUSES:
                raise DataError(f"case {self.case_id!r}: unknown resection status {self.resection_status!r}")
            self.resection_status = status


def read_survival_csv(path) -> dict:
    """``case_id,age,survival_days[,resection_status]`` -> {case_id: SurvivalRecord}."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read survival CSV {path}: {exc}") from exc
    records = {}
    for row in rows:
        if "case_id" not in row or "age" not in row:
            raise DataError(f"{path}: header must contain case_id and age")
        days = (row.get("survival_days") or "").strip()
        records[row["case_id"]] = SurvivalRecord(
            row["case_id"],
            float(row["age"]),
            float(days) if days else None,
            row.get("resection_status"),
        )
    return records


def write_survival_csv(records, path):
    records = list(records)
    with_status = any(r.resection_status for r in records)
    header = ["case_id", "age", "survival_days"] + (["resection_status"] if with_status else [])
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in records:
                row = [r.case_id, repr(r.age), "" if r.survival_days is None else repr(r.survival_days)]
                if with_status:
                    row.append(r.resection_status or "")
                w.writerow(row)
    except OSError as exc:
        raise IoError(f"cannot write survival CSV {path}: {exc}") from exc
