"""Ensemble evaluation of trained cross-validation models."""
from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..gnn import predict_proba
from ..pipeline.ensemble import ensemble_predict
from ..pipeline.train import SlideCache
from .metrics import PredictionSet
from .report import EvalReport, build_report


def predict_records(records, models, config, cache: SlideCache | None = None):
    """Ensemble PredictionSet plus one PredictionSet per model.

    Graphs use every patch of the slide (no subsampling).
    """
    if not records:
        raise ValidationError("nothing to evaluate")
    cache = cache or SlideCache(config.magnifications)
    ids = [r.slide_id for r in records]
    labels = [r.label for r in records]
    per_model = [[] for _ in models]
    ens = []
    for r in records:
        graph = cache.full_graph(r, config.mode)
        probs = [predict_proba(m, graph) for m in models]
        for k, p in enumerate(probs):
            per_model[k].append(p)
        ens.append(ensemble_predict(models, graph))
    return (
        PredictionSet(ids, labels, np.array(ens)),
        [PredictionSet(ids, labels, np.array(p)) for p in per_model],
    )


def predict_out_of_fold(records, models, folds, config, cache: SlideCache | None = None):
    """Cross-validation predictions: each slide scored by the model whose
    fold held its patient out. Returns the pooled set and one set per fold."""
    if len(models) != len(folds):
        raise ValidationError(f"{len(models)} models for {len(folds)} folds")
    cache = cache or SlideCache(config.magnifications)
    pooled_ids, pooled_labels, pooled_probs, per_fold = [], [], [], []
    for model, fold in zip(models, folds):
        val = fold.val_records(records)
        if not val:
            raise ValidationError(f"fold {fold.fold_id} has no slides in this manifest")
        probs = np.array([predict_proba(model, cache.full_graph(r, config.mode)) for r in val])
        ids, labels = [r.slide_id for r in val], [r.label for r in val]
        per_fold.append(PredictionSet(ids, labels, probs))
        pooled_ids += ids
        pooled_labels += labels
        pooled_probs.append(probs)
    return PredictionSet(pooled_ids, pooled_labels, np.concatenate(pooled_probs)), per_fold


def evaluate(records, models, config, iters: int = 10000, seed: int = 0, folds=None) -> EvalReport:
    """Hold-out evaluation by average ensemble, or, with ``folds``,
    cross-validation evaluation on out-of-fold predictions."""
    if folds is None:
        preds, per = predict_records(records, models, config)
    else:
        preds, per = predict_out_of_fold(records, models, folds, config)
    return build_report(preds, per, iters, seed)
