"""Raster I/O, saturation segmentation and patch-grid tiling."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..errors import EmptySlideError, HeaderError, ParseError, UnsupportedUpsamplingError, ValidationError
from .formats import format_float, format_mag

DEFAULT_SAT_THRESH = 0.06
DEFAULT_MIN_TISSUE = 0.5
GRID_HEADER = ["mag", "row", "col", "x", "y", "tissue_fraction"]


def _read_netpbm(path, magic: bytes, channels: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated header")
        tokens.append(raw[start:pos])
    if tokens[0] != magic:
        raise ParseError(f"{path}: expected {magic.decode()} raster, found {tokens[0][:8]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ParseError(f"{path}: malformed header") from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ParseError(f"{path}: invalid dimensions or maxval")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    body = raw[pos:pos + count * dtype.itemsize]
    if len(body) != count * dtype.itemsize:
        raise ParseError(f"{path}: pixel data truncated")
    arr = np.frombuffer(body, dtype=dtype).astype(np.uint16 if maxval > 255 else np.uint8)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return arr.reshape(shape)


def read_ppm(path) -> np.ndarray:
    """Binary PPM (P6) as an ``H x W x 3`` array."""
    return _read_netpbm(path, b"P6", 3)


def write_ppm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError("PPM image must be H x W x 3")
    h, w, _ = image.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + image.tobytes())


def read_pgm(path) -> np.ndarray:
    return _read_netpbm(path, b"P5", 1)


def write_mask(path, mask: np.ndarray) -> None:
    """Binary PGM (P5): tissue 255, background 0."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + (mask.astype(np.uint8) * 255).tobytes())


def read_mask(path) -> np.ndarray:
    return read_pgm(path) > 0


def segment_tissue(image: np.ndarray, sat_thresh: float = DEFAULT_SAT_THRESH) -> np.ndarray:
    """Tissue where HSV saturation ``(max - min) / max`` exceeds ``sat_thresh``."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.size == 0:
        raise ParseError(f"expected a non-empty H x W x 3 raster, got shape {image.shape}")
    if not 0.0 <= sat_thresh <= 1.0:
        raise ValidationError("sat_thresh must lie in [0, 1]")
    rgb = image.astype(np.float64)
    hi = rgb.max(axis=2)
    lo = rgb.min(axis=2)
    sat = np.divide(hi - lo, hi, out=np.zeros_like(hi), where=hi > 0)
    return sat > sat_thresh


def native_patch_size(native_mag: float, target_mag: float, out_px: int = 256) -> int:
    """Side length in native pixels that downsamples to ``out_px`` at ``target_mag``."""
    if target_mag <= 0 or native_mag <= 0:
        raise ValidationError("magnifications must be positive")
    if target_mag > native_mag:
        raise UnsupportedUpsamplingError(
            f"target magnification {target_mag}x exceeds native {native_mag}x"
        )
    size = Fraction(out_px) * Fraction(native_mag) / Fraction(target_mag)
    if size.denominator != 1:
        raise ValidationError(f"patch size {float(size)} px is not an integer")
    return int(size)


@dataclass
class PatchGrid:
    magnification: float
    rows: int
    cols: int
    patch_native: int
    coords: np.ndarray  # (n, 2) row, col
    tissue_fraction: np.ndarray  # (n,)

    @property
    def xy(self) -> np.ndarray:
        return self.coords[:, ::-1] * self.patch_native

    @property
    def entries(self) -> list[tuple]:
        return [
            (int(r), int(c), int(c) * self.patch_native, int(r) * self.patch_native, float(f))
            for (r, c), f in zip(self.coords, self.tissue_fraction)
        ]

    def __len__(self):
        return len(self.coords)


def build_patch_grid(mask, native_mag, target_mag, min_tissue=DEFAULT_MIN_TISSUE) -> PatchGrid:
    """Tile ``mask`` with non-overlapping patches; partial edge tiles are dropped."""
    if not 0.0 <= min_tissue <= 1.0:
        raise ValidationError("min_tissue must lie in [0, 1]")
    mask = np.asarray(mask, dtype=bool)
    tile = native_patch_size(native_mag, target_mag)
    rows, cols = mask.shape[0] // tile, mask.shape[1] // tile
    if rows == 0 or cols == 0:
        raise EmptySlideError(f"image {mask.shape} smaller than one {tile}px patch")
    frac = (
        mask[: rows * tile, : cols * tile]
        .reshape(rows, tile, cols, tile)
        .sum(axis=(1, 3), dtype=np.int64)
        / float(tile * tile)
    )
    keep = np.argwhere(frac >= min_tissue)
    if keep.size == 0 or not np.any(frac[keep[:, 0], keep[:, 1]] > 0):
        raise EmptySlideError("no patch meets the tissue threshold")
    return PatchGrid(
        magnification=float(target_mag),
        rows=rows,
        cols=cols,
        patch_native=tile,
        coords=keep.astype(np.int64),
        tissue_fraction=frac[keep[:, 0], keep[:, 1]],
    )


def write_grid(path, grid: PatchGrid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GRID_HEADER)
        mag = format_mag(grid.magnification)
        for r, c, x, y, f in grid.entries:
            writer.writerow([mag, r, c, x, y, format_float(f)])


def read_grid(path) -> PatchGrid:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != GRID_HEADER:
            raise HeaderError(f"{path}: expected header {','.join(GRID_HEADER)}")
        rows = [row for row in reader if row]
    if not rows:
        raise EmptySlideError(f"{path}: grid has no entries")
    try:
        mag = float(rows[0][0])
        data = np.array([[int(v) for v in row[1:5]] for row in rows], dtype=np.int64)
        frac = np.array([float(row[5]) for row in rows])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path}: malformed grid row") from exc
    coords = data[:, :2]
    patch = _infer_patch_size(data)
    return PatchGrid(
        magnification=mag,
        rows=int(coords[:, 0].max()) + 1,
        cols=int(coords[:, 1].max()) + 1,
        patch_native=patch,
        coords=coords,
        tissue_fraction=frac,
    )


def _infer_patch_size(data: np.ndarray) -> int:
    # columns: row, col, x, y
    for r, c, x, y in data:
        if c > 0:
            return int(x // c)
        if r > 0:
            return int(y // r)
    return 0
