"""Per-magnification feature files.

Format (CSV, one file per slide and magnification)::

    mag,row,col,f0,...,f{D-1}
    5,0,0,0.25,-1.5,...

Rows are sorted by ``(row, col)`` and floats use the shortest round-trip
decimal, so ``read_features(write_features(fs)) == fs`` bit for bit.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatchError, DuplicateKeyError, HeaderError, ParseError
from .formats import format_float, format_mag


@dataclass(eq=False)
class FeatureSet:
    magnification: float
    dim: int
    coords: np.ndarray  # (n, 2) int64, sorted by (row, col)
    values: np.ndarray  # (n, dim) float64

    def __post_init__(self):
        self.magnification = float(self.magnification)
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, self.dim)
        if len(self.coords) != len(self.values):
            raise DimensionMismatchError("coords and values disagree in length")
        order = np.lexsort((self.coords[:, 1], self.coords[:, 0]))
        self.coords = self.coords[order]
        self.values = self.values[order]
        if len(self.coords) > 1:
            same = np.all(self.coords[1:] == self.coords[:-1], axis=1)
            if same.any():
                r, c = self.coords[1:][same][0]
                raise DuplicateKeyError(f"duplicate patch ({format_mag(self.magnification)},{r},{c})")

    @classmethod
    def from_rows(cls, magnification, dim, rows: dict) -> "FeatureSet":
        keys = list(rows)
        vals = [np.asarray(rows[k], dtype=np.float64) for k in keys]
        if any(v.shape != (dim,) for v in vals):
            raise DimensionMismatchError(f"every feature vector must have length {dim}")
        return cls(magnification, dim, np.array(keys, dtype=np.int64).reshape(-1, 2),
                   np.array(vals).reshape(-1, dim))

    @property
    def rows(self) -> dict:
        return {(int(r), int(c)): v for (r, c), v in zip(self.coords, self.values)}

    def __len__(self):
        return len(self.coords)

    def __eq__(self, other):
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (
            self.magnification == other.magnification
            and self.dim == other.dim
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.values, other.values)
        )

    def subset(self, mask) -> "FeatureSet":
        return FeatureSet(self.magnification, self.dim, self.coords[mask], self.values[mask])


def write_features(path, fs: FeatureSet) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mag", "row", "col"] + [f"f{i}" for i in range(fs.dim)])
        mag = format_mag(fs.magnification)
        for (r, c), vec in zip(fs.coords, fs.values):
            writer.writerow([mag, int(r), int(c)] + [format_float(v) for v in vec])


def read_features(path, magnification: float | None = None) -> FeatureSet:
    """Parse a feature file.

    ``magnification`` is required only for header-only files, where the
    rows cannot supply it; otherwise it is checked against the rows.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["mag", "row", "col"]:
            raise HeaderError(f"{path}: header must start with mag,row,col")
        dim = len(header) - 3
        if header[3:] != [f"f{i}" for i in range(dim)]:
            raise HeaderError(f"{path}: feature columns must be f0..f{dim - 1}")
        coords, values, mags = [], [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 3:
                raise DimensionMismatchError(
                    f"{path}:{lineno}: expected {dim} features, found {len(row) - 3}"
                )
            try:
                mags.add(float(row[0]))
                coords.append((int(row[1]), int(row[2])))
                values.append([float(v) for v in row[3:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if len(mags) > 1:
        raise ParseError(f"{path}: rows mix magnifications {sorted(mags)}")
    if mags:
        mag = mags.pop()
        if magnification is not None and float(magnification) != mag:
            raise ParseError(f"{path}: rows are {mag}x, expected {magnification}x")
    elif magnification is None:
        raise ParseError(f"{path}: empty feature file needs an explicit magnification")
    else:
        mag = float(magnification)
    seen = set()
    for key in coords:
        if key in seen:
            raise DuplicateKeyError(f"{path}: duplicate patch ({format_mag(mag)},{key[0]},{key[1]})")
        seen.add(key)
    return FeatureSet(mag, dim, np.array(coords, dtype=np.int64).reshape(-1, 2),
                      np.array(values, dtype=np.float64).reshape(-1, dim))
