"""Slide manifest CSV."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import HeaderError, ParseError, ValidationError
from .features import FeatureSet, read_features
from .formats import format_mag

CLASS_NAMES = ("HGSC", "EC", "CCC", "LGSC", "MC")
MANIFEST_MAGS = (5.0, 10.0, 20.0)
MANIFEST_HEADER = [
    "slide_id", "patient_id", "label", "native_mag",
    "feature_path_5x", "feature_path_10x", "feature_path_20x",
]


@dataclass
class SlideRecord:
    slide_id: str
    patient_id: str
    label: int
    native_mag: float
    feature_paths: dict = field(default_factory=dict)  # magnification -> path

    def __post_init__(self):
        if self.label not in range(len(CLASS_NAMES)):
            raise ValidationError(f"slide {self.slide_id}: label {self.label} outside 0..4")
        if not self.native_mag > 0:
            raise ValidationError(f"slide {self.slide_id}: native_mag must be positive")

    @property
    def feature_path(self):
        """The single feature path of a one-magnification slide."""
        if len(self.feature_paths) != 1:
            raise ValidationError(f"slide {self.slide_id} has {len(self.feature_paths)} feature files")
        return next(iter(self.feature_paths.values()))

    def load_features(self, mags) -> dict:
        out = {}
        for mag in mags:
            mag = float(mag)
            if mag not in self.feature_paths:
                raise ValidationError(f"slide {self.slide_id} has no {format_mag(mag)}x features")
            out[mag] = read_features(self.feature_paths[mag], magnification=mag)
        return out


def read_manifest(path) -> list[SlideRecord]:
    """Parse a manifest; relative feature paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise HeaderError(f"{path}: expected header {','.join(MANIFEST_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ParseError(f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} columns")
            try:
                label = int(row[2])
                native = float(row[3])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            paths = {}
            for mag, value in zip(MANIFEST_MAGS, row[4:]):
                if value:
                    p = Path(value)
                    paths[mag] = p if p.is_absolute() else base / p
            records.append(SlideRecord(row[0], row[1], label, native, paths))
    ids = [r.slide_id for r in records]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate slide_id")
    return records


def write_manifest(path, records, base=None) -> None:
    """Write records; paths are written relative to ``base`` when possible."""
    path = Path(path)
    base = Path(base) if base is not None else path.parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for rec in records:
            cols = []
            for mag in MANIFEST_MAGS:
                p = rec.feature_paths.get(mag)
                if p is None:
                    cols.append("")
                    continue
                p = Path(p)
                try:
                    p = p.relative_to(base)
                except ValueError:
                    pass
                cols.append(p.as_posix())
            writer.writerow([rec.slide_id, rec.patient_id, rec.label, format_mag(rec.native_mag)] + cols)


def load_slide_features(records, mags) -> dict:
    """``slide_id -> {mag: FeatureSet}`` for every record."""
    return {rec.slide_id: rec.load_features(mags) for rec in records}


__all__ = [
    "CLASS_NAMES", "FeatureSet", "MANIFEST_HEADER", "SlideRecord",
    "load_slide_features", "read_manifest", "write_manifest",
]
