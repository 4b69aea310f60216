"""Average-ensemble inference over cross-validation models."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..config import ModelConfig
from ..errors import CheckpointMismatchError, ValidationError
from ..gnn import init_model, load_checkpoint, predict_proba, read_checkpoint
from ..numkit import Rng

_FOLD_CKPT = re.compile(r"fold(\d+)\.ckpt$")


def ensemble_predict(models, graph) -> np.ndarray:
    """Mean of the models' softmax outputs."""
    models = list(models)
    if not models:
        raise ValidationError("ensemble needs at least one model")
    ref = models[0]
    for m in models[1:]:
        if m.mode is not ref.mode or m.feature_dim != ref.feature_dim or m.n_parameters() != ref.n_parameters():
            raise CheckpointMismatchError("ensemble members have different architectures")
    return np.mean([predict_proba(m, graph) for m in models], axis=0)


def checkpoint_paths(models_dir) -> list[Path]:
    """``fold{K}.ckpt`` files of a directory ordered by K."""
    found = []
    for p in Path(models_dir).iterdir():
        m = _FOLD_CKPT.search(p.name)
        if m:
            found.append((int(m.group(1)), p))
    if not found:
        raise FileNotFoundError(f"no fold*.ckpt files in {models_dir}")
    return [p for _, p in sorted(found)]


def load_model(path, config: ModelConfig):
    """Rebuild a model for ``config`` and fill it from a checkpoint; the
    feature width is read off the first projection matrix."""
    stored = read_checkpoint(path)
    if not stored or not stored[0][0].startswith("proj."):
        raise CheckpointMismatchError(f"{path}: missing input projection")
    model = init_model(config, stored[0][1].shape[0], Rng(0))
    return load_checkpoint(path, model)


def load_models(models_dir, config: ModelConfig) -> list:
    return [load_model(p, config) for p in checkpoint_paths(models_dir)]
