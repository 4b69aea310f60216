"""Slide-level I/O: rasters, tissue masks, patch grids, feature files, manifests."""
from .features import FeatureSet, read_features, write_features
from .formats import format_float, format_mag
from .imaging import (
    DEFAULT_MIN_TISSUE,
    DEFAULT_SAT_THRESH,
    PatchGrid,
    build_patch_grid,
    native_patch_size,
    read_grid,
    read_mask,
    read_ppm,
    segment_tissue,
    write_grid,
    write_mask,
    write_ppm,
)
from .manifest import CLASS_NAMES, SlideRecord, load_slide_features, read_manifest, write_manifest
from .synth import SynthConfig, class_means, synth_dataset, synth_slide

__all__ = [
    "CLASS_NAMES", "DEFAULT_MIN_TISSUE", "DEFAULT_SAT_THRESH", "FeatureSet", "PatchGrid",
    "SlideRecord", "SynthConfig", "build_patch_grid", "class_means", "format_float",
    "format_mag", "load_slide_features", "native_patch_size", "read_features", "read_grid",
    "read_manifest", "read_mask", "read_ppm", "segment_tissue", "synth_dataset", "synth_slide",
    "write_features", "write_grid", "write_manifest", "write_mask", "write_ppm",
]
