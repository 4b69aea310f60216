"""Folds, balanced sampling, training, ensembling and tuning."""
from ..config import PUBLISHED_RANGES, PRESET_NAMES, TUNED_FIELDS, ModelConfig, preset
from .ensemble import checkpoint_paths, ensemble_predict, load_model, load_models
from .folds import FoldSplit, make_folds, patient_labels, read_folds, write_folds
from .sampler import BalancedSampler
from .train import (
    LOG_HEADER,
    EpochLog,
    FitResult,
    SlideCache,
    balanced_cross_entropy,
    cross_validate,
    fit,
    mean_val_ce,
    train_fold,
    write_log,
)
from .tune import Trial, TunePlan, TuneResult, TuneStep, tune, write_trials

__all__ = [
    "BalancedSampler", "EpochLog", "FitResult", "FoldSplit", "LOG_HEADER", "ModelConfig",
    "PUBLISHED_RANGES", "PRESET_NAMES", "SlideCache", "TUNED_FIELDS", "Trial", "TunePlan",
    "TuneResult", "TuneStep", "balanced_cross_entropy", "checkpoint_paths", "cross_validate",
    "ensemble_predict", "fit", "load_model", "load_models", "make_folds", "mean_val_ce",
    "patient_labels", "preset", "read_folds", "train_fold", "tune", "write_folds", "write_log",
    "write_trials",
]
