"""Seeded synthetic slides standing in for extracted patch features.

Generative model (all draws from :class:`~patchgraph.numkit.Rng` substreams of
``seed``):

* For each magnification ``m`` an orthonormal basis ``Q_m`` (QR of a standard
  normal ``dim x dim`` matrix). Class ``c`` has mean
  ``mu[c, m] = separation * noise / sqrt(2) * Q_m[:, c]``, so any two class
  means are ``separation * noise`` apart. Background mean is zero.
* Each slide has a low-magnification grid of ``rows x cols`` patches (each
  drawn uniformly from ``[ceil(extent/2), extent]``) and, when two
  magnifications are requested, the aligned ``2 rows x 2 cols`` grid above it.
* One axis-aligned rectangle of the low grid (sides uniform in
  ``[ceil(side/2), side]``, position uniform) carries the class signal; its
  high-magnification children inherit membership. Patches inside get
  ``mu[label, m] + noise * N(0, I)``, the rest ``noise * N(0, I)``.

Patients are labelled ``i % classes`` so classes are balanced.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..numkit import Rng
from .features import FeatureSet, write_features
from .formats import format_mag
from .manifest import SlideRecord, write_manifest


@dataclass
class SynthConfig:
    n_patients: int = 30
    slides_per_patient: int = 1
    classes: int = 5
    mags: list = field(default_factory=lambda: [5.0, 10.0])
    dim: int = 16
    grid_extent: list = field(default_factory=lambda: [4, 4])
    separation: float = 4.0
    noise: float = 1.0
    native_mag: float = 40.0
    n_test_patients: int = 0
    seed: int = 0

    def validate(self):
        if self.classes != 5:
            raise ValidationError("synthetic data always has 5 classes")
        mags = sorted(float(m) for m in self.mags)
        if len(mags) not in (1, 2) or (len(mags) == 2 and mags[1] != 2 * mags[0]):
            raise ValidationError("mags must be one magnification or a doubling pair")
        if any(m not in (5.0, 10.0, 20.0) for m in mags):
            raise ValidationError("manifest supports 5x, 10x and 20x only")
        if self.dim < self.classes:
            raise ValidationError("dim must be at least the number of classes")
        if self.n_patients < 1 or self.slides_per_patient < 1 or self.n_test_patients < 0:
            raise ValidationError("patient and slide counts must be positive")
        if min(self.grid_extent) < 1:
            raise ValidationError("grid_extent must be positive")
        self.mags = mags
        self.grid_extent = [int(v) for v in self.grid_extent]


def class_means(cfg: SynthConfig) -> dict:
    """``mag -> (classes, dim)`` array of class means."""
    world = Rng(cfg.seed).substream("synth/world")
    scale = cfg.separation * cfg.noise / math.sqrt(2.0)
    out = {}
    for mag in cfg.mags:
        a = world.substream(f"basis/{format_mag(mag)}").normal(size=(cfg.dim, cfg.dim))
        q, r = np.linalg.qr(a)
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        out[float(mag)] = scale * q[:, : cfg.classes].T
    return out


def synth_slide(cfg: SynthConfig, slide_id: str, label: int, means: dict) -> dict:
    """``mag -> FeatureSet`` for one slide."""
    rng = Rng(cfg.seed).substream(f"synth/slide/{slide_id}")
    ext_r, ext_c = cfg.grid_extent[0], cfg.grid_extent[-1]
    rows = int(math.ceil(ext_r / 2)) + rng.integers(ext_r - math.ceil(ext_r / 2) + 1)
    cols = int(math.ceil(ext_c / 2)) + rng.integers(ext_c - math.ceil(ext_c / 2) + 1)
    h = int(math.ceil(rows / 2)) + rng.integers(rows - math.ceil(rows / 2) + 1)
    w = int(math.ceil(cols / 2)) + rng.integers(cols - math.ceil(cols / 2) + 1)
    top = rng.integers(rows - h + 1)
    left = rng.integers(cols - w + 1)
    out = {}
    for level, mag in enumerate(cfg.mags):
        k = 2 ** level
        rr, cc = np.meshgrid(np.arange(rows * k), np.arange(cols * k), indexing="ij")
        coords = np.stack([rr.ravel(), cc.ravel()], axis=1)
        inside = (
            (coords[:, 0] // k >= top) & (coords[:, 0] // k < top + h)
            & (coords[:, 1] // k >= left) & (coords[:, 1] // k < left + w)
        )
        noise = rng.substream(f"noise/{format_mag(mag)}").normal(size=(len(coords), cfg.dim))
        values = cfg.noise * noise + inside[:, None] * means[float(mag)][label][None, :]
        out[float(mag)] = FeatureSet(mag, cfg.dim, coords, values)
    return out


def _write_cohort(cfg, out_dir: Path, prefix: str, n_patients: int, means) -> list:
    feat_dir = out_dir / "features"
    records = []
    for i in range(n_patients):
        patient = f"{prefix}{i:03d}"
        label = i % cfg.classes
        for s in range(cfg.slides_per_patient):
            slide_id = f"{patient}_S{s}"
            sets = synth_slide(cfg, slide_id, label, means)
            paths = {}
            for mag, fs in sets.items():
                p = feat_dir / f"{slide_id}_{format_mag(mag)}x.csv"
                write_features(p, fs)
                paths[mag] = p
            records.append(SlideRecord(slide_id, patient, label, cfg.native_mag, paths))
    return records


def synth_dataset(out_dir, cfg: SynthConfig | None = None, **overrides) -> dict:
    """Write ``manifest.csv`` (and ``test_manifest.csv``), feature files and
    ``synth_config.json`` under ``out_dir``.

    Returns ``{"train": records, "test": records}``.
    """
    cfg = cfg or SynthConfig()
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise ValidationError(f"unknown synth option {key!r}")
        setattr(cfg, key, value)
    cfg.validate()
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    means = class_means(cfg)
    train = _write_cohort(cfg, out_dir, "P", cfg.n_patients, means)
    write_manifest(out_dir / "manifest.csv", train)
    test = []
    if cfg.n_test_patients:
        test = _write_cohort(cfg, out_dir, "T", cfg.n_test_patients, means)
        write_manifest(out_dir / "test_manifest.csv", test)
    (out_dir / "synth_config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    return {"train": train, "test": test}
