"""Bundled channel reference tables: per-setting slope variance and
visibility with and without adaptive optics, as measured on the 60 cm and
30 m bench channels. Rows with an empty visibility mark settings where no
phase lock could be maintained.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .skr import DomainError

__all__ = ["ReferenceRow", "load_reference", "reference_path",
           "no_ao_points", "rows_for", "CHANNELS"]

CHANNELS = ("cm60", "m30")


@dataclass(frozen=True)
class ReferenceRow:
    setting: str
    orientation: str
    ao: bool
    slope_variance: float
    visibility: float | None
    visibility_std: float | None


def reference_path(channel: str) -> Path:
    """Filesystem path of a bundled reference table."""
    if channel not in CHANNELS:
        raise DomainError(f"unknown channel {channel!r}")
    return Path(str(resources.files("aoqkd") / "data" /
                    f"{channel}_reference.csv"))


def load_reference(source) -> list[ReferenceRow]:
    """Parse a reference table from a channel name or a CSV path."""
    path = reference_path(source) if source in CHANNELS else Path(source)
    if not path.exists():
        raise FileNotFoundError(f"reference dataset not found: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(
            (line for line in fh if not line.startswith("#")))
        expected = {"setting", "orientation", "ao", "slope_variance",
                    "visibility", "visibility_std"}
        if set(reader.fieldnames or ()) != expected:
            raise DomainError(
                f"{path}: expected columns {sorted(expected)}, "
                f"got {reader.fieldnames}")
        for rec in reader:
            vis = rec["visibility"].strip()
            std = rec["visibility_std"].strip()
            rows.append(ReferenceRow(
                setting=rec["setting"],
                orientation=rec["orientation"],
                ao=rec["ao"].strip().lower() in ("on", "true", "1", "yes"),
                slope_variance=float(rec["slope_variance"]),
                visibility=float(vis) if vis else None,
                visibility_std=float(std) if std else None,
            ))
    if not rows:
        raise DomainError(f"{path}: dataset is empty")
    return rows


def rows_for(rows: list[ReferenceRow], orientation: str,
             ao: bool) -> list[ReferenceRow]:
    """Rows of one orientation/AO branch, ambient first."""
    order = {"ambient": 0, "low": 1, "medium": 2, "high": 3}
    picked = [r for r in rows
              if r.ao == ao and r.orientation == orientation]
    return sorted(picked, key=lambda r: order.get(r.setting, 99))


def no_ao_points(rows: list[ReferenceRow],
                 orientation: str = "across") -> list[tuple[float, float]]:
    """(slope_variance, visibility) calibration pairs from the no-AO branch."""
    pts = [(r.slope_variance, r.visibility)
           for r in rows_for(rows, orientation, ao=False)
           if r.visibility is not None]
    if len(pts) < 2:
        raise DomainError("not enough no-AO reference points to calibrate")
    return pts
