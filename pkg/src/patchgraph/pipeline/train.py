"""Training a fold: balanced sampling, Adam, LR decay on plateau, checkpoint
selection by balanced validation cross-entropy."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import ModelConfig
from ..errors import DivergenceError, ValidationError
from ..gnn import PatchGraphModel, init_model, model_forward, save_checkpoint
from ..graphbuild import assemble_graph, subsample_patches
from ..numkit import AdamState, Rng, Tape, adam_step, backward, cross_entropy
from ..slideio.formats import format_float
from .folds import FoldSplit, make_folds, write_folds
from .sampler import BalancedSampler

log = logging.getLogger(__name__)

LOG_HEADER = ["epoch", "train_loss", "val_balanced_ce", "lr"]


class SlideCache:
    """Feature sets per slide, read from disk once."""

    def __init__(self, magnifications):
        self.mags = [float(m) for m in magnifications]
        self._sets: dict = {}

    def features(self, record) -> list:
        if record.slide_id not in self._sets:
            sets = record.load_features(self.mags)
            self._sets[record.slide_id] = [sets[m] for m in self.mags]
        return self._sets[record.slide_id]

    def feature_dim(self, records) -> int:
        dims = {fs.dim for r in records for fs in self.features(r)}
        if len(dims) != 1:
            raise ValidationError(f"slides disagree on feature dimension: {sorted(dims)}")
        return dims.pop()

    def full_graph(self, record, mode):
        return assemble_graph(self.features(record), mode)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_balanced_ce: float
    lr: float


@dataclass
class FitResult:
    model: PatchGraphModel
    best_epoch: int
    best_val_ce: float
    history: list = field(default_factory=list)
    fold_id: int | None = None


def balanced_cross_entropy(model, graphs, labels) -> float:
    """Mean over classes present of the mean per-slide cross-entropy."""
    per_class: dict = {}
    for g, y in zip(graphs, labels):
        ce = cross_entropy(model_forward(model, g), int(y)).item()
        per_class.setdefault(int(y), []).append(ce)
    if not per_class:
        raise ValidationError("balanced cross-entropy needs at least one slide")
    return float(np.mean([np.mean(per_class[c]) for c in sorted(per_class)]))


def _snapshot(model) -> list:
    return [p.data.copy() for p in model.parameters()]


def _restore(model, snapshot) -> None:
    for p, arr in zip(model.parameters(), snapshot):
        p.data[...] = arr


def fit(config: ModelConfig, train, val=None, cache: SlideCache | None = None,
        stream: str = "fit") -> FitResult:
    """Train one model on ``train`` records, selecting on ``val`` (defaults to ``train``).

    Every stochastic step draws from a substream of ``config.seed`` under
    ``stream``, so folds trained with distinct streams are independent.
    """
    if not train:
        raise ValidationError("empty training set")
    val = list(val) if val else list(train)
    cache = cache or SlideCache(config.magnifications)
    mode = config.mode
    dim = cache.feature_dim(list(train) + val)

    root = Rng(config.seed).substream(stream)
    model = init_model(config, dim, root.substream("init"))
    sampler = BalancedSampler(train, root.substream("sampler"))
    sub_rng = root.substream("subsample")
    drop_rng = root.substream("dropout")
    params = model.parameters()
    opt = AdamState.for_params(
        params, learning_rate=config.learning_rate, beta1=config.beta1, beta2=config.beta2,
        epsilon=config.epsilon, weight_decay=config.weight_decay,
    )
    val_graphs = [cache.full_graph(r, mode) for r in val]
    val_labels = [r.label for r in val]

    best_ce, best_epoch, best = math.inf, 0, _snapshot(model)
    since_best = plateau = 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        graphs: dict = {}  # one fresh subsample per slide per epoch
        losses = []
        for step in range(len(train)):
            rec = sampler.next()
            if rec.slide_id not in graphs:
                sets = subsample_patches(cache.features(rec), config.max_patches, sub_rng)
                graphs[rec.slide_id] = assemble_graph(sets, mode)
            with Tape() as tape:
                loss = cross_entropy(model_forward(model, graphs[rec.slide_id], True, drop_rng), rec.label)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(
                    f"non-finite training loss {value} at epoch {epoch}, step {step + 1}, "
                    f"slide {rec.slide_id}, lr {opt.learning_rate:g}"
                )
            grads = backward(loss, tape)
            adam_step(params, [grads.get(p) for p in params], opt)
            losses.append(value)
        val_ce = balanced_cross_entropy(model, val_graphs, val_labels)
        if not math.isfinite(val_ce):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochLog(epoch, float(np.mean(losses)), val_ce, opt.learning_rate))
        log.debug("epoch %d loss %.4f val %.4f lr %g", epoch, history[-1].train_loss, val_ce, opt.learning_rate)
        if val_ce < best_ce:
            best_ce, best_epoch, best = val_ce, epoch, _snapshot(model)
            since_best = plateau = 0
        else:
            since_best += 1
            plateau += 1
            if plateau >= config.lr_patience:
                opt.learning_rate *= config.lr_decay
                plateau = 0
            if since_best >= config.stop_patience:
                break
    _restore(model, best)
    return FitResult(model, best_epoch, best_ce, history)


def write_log(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        for row in history:
            writer.writerow([row.epoch, format_float(row.train_loss), format_float(row.val_balanced_ce),
                             format_float(row.lr)])


def train_fold(fold: FoldSplit, config: ModelConfig, records, out_dir=None,
               cache: SlideCache | None = None) -> FitResult:
    """Train on the fold's training patients; write ``fold{K}.ckpt`` and
    ``fold{K}_log.csv`` when ``out_dir`` is given."""
    train, val = fold.train_records(records), fold.val_records(records)
    if not train or not val:
        raise ValidationError(f"fold {fold.fold_id} has an empty training or validation set")
    leaked = {r.patient_id for r in train} & {r.patient_id for r in val}
    if leaked:
        raise ValidationError(f"fold {fold.fold_id}: patients in both sets: {sorted(leaked)}")
    result = fit(config, train, val, cache, stream=f"fold{fold.fold_id}")
    result.fold_id = fold.fold_id
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / f"fold{fold.fold_id}.ckpt", result.model)
        write_log(out / f"fold{fold.fold_id}_log.csv", result.history)
    log.info("fold %d: best balanced val CE %.4f at epoch %d", fold.fold_id, result.best_val_ce, result.best_epoch)
    return result


def cross_validate(records, config: ModelConfig, k: int = 5, out_dir=None,
                   cache: SlideCache | None = None) -> list[FitResult]:
    """Train one model per fold. ``out_dir`` receives ``folds.json``,
    ``config.json``, checkpoints and logs."""
    folds = make_folds(records, k, config.seed)
    cache = cache or SlideCache(config.magnifications)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_folds(Path(out_dir) / "folds.json", folds, config.seed)
        config.save(Path(out_dir) / "config.json")
    return [train_fold(f, config, records, out_dir, cache) for f in folds]


def mean_val_ce(results) -> float:
    return float(np.mean([r.best_val_ce for r in results]))
