"""Classification metrics over slide-level probability vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ValidationError
from ..slideio.manifest import CLASS_NAMES

N_CLASSES = len(CLASS_NAMES)


@dataclass
class PredictionSet:
    slide_ids: list
    labels: np.ndarray  # (N,) int
    probs: np.ndarray  # (N, 5)

    def __post_init__(self):
        self.slide_ids = [str(s) for s in self.slide_ids]
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        n = len(self.slide_ids)
        if self.labels.shape != (n,) or self.probs.shape != (n, N_CLASSES):
            raise ValidationError(
                f"{n} slides need {n} labels and an {n}x{N_CLASSES} probability matrix"
            )
        if n and (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise ValidationError("labels must lie in 0..4")
        if not np.all(np.isfinite(self.probs)) or np.any(np.abs(self.probs.sum(axis=1) - 1.0) > 1e-9):
            raise ValidationError("probability rows must be finite and sum to 1")

    def __len__(self):
        return len(self.slide_ids)

    @property
    def predicted(self) -> np.ndarray:
        # np.argmax returns the first maximum, so ties go to the lower class
        return np.argmax(self.probs, axis=1)

    def take(self, index) -> "PredictionSet":
        index = np.asarray(index, dtype=np.int64)
        return PredictionSet([self.slide_ids[i] for i in index], self.labels[index], self.probs[index])

    def canonical(self) -> "PredictionSet":
        """Rows sorted by slide id, so results do not depend on input order."""
        return self.take(sorted(range(len(self)), key=lambda i: self.slide_ids[i]))


def confusion(preds: PredictionSet) -> np.ndarray:
    """5x5 counts, rows = true class, columns = predicted class."""
    return kernels.confusion_matrix(preds.labels, preds.predicted, N_CLASSES)


def _require_all_classes(labels) -> None:
    missing = sorted(set(range(N_CLASSES)) - set(int(v) for v in labels))
    if missing:
        raise ValidationError(f"classes absent from the true labels: {missing}")


def balanced_accuracy_from_confusion(cm: np.ndarray) -> float:
    support = cm.sum(axis=1)
    if np.any(support == 0):
        raise ValidationError("balanced accuracy needs every class present")
    return float(np.mean(np.diag(cm) / support))


def macro_f1_from_confusion(cm: np.ndarray) -> float:
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(axis=0) + cm.sum(axis=1)  # 2TP + FP + FN
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1.mean())


def balanced_accuracy(preds: PredictionSet) -> float:
    _require_all_classes(preds.labels)
    return balanced_accuracy_from_confusion(confusion(preds))


def macro_f1(preds: PredictionSet) -> float:
    """Mean per-class F1; a class never predicted and never true scores 0."""
    _require_all_classes(preds.labels)
    return macro_f1_from_confusion(confusion(preds))


def macro_auroc(preds: PredictionSet) -> float:
    """Unweighted mean of one-vs-rest AUROCs (mid-ranks for ties)."""
    values = []
    for c in range(N_CLASSES):
        pos = preds.labels == c
        if not pos.any() or pos.all():
            raise ValidationError(f"class {c} needs both positive and negative slides for AUROC")
        values.append(kernels.auroc_binary(preds.probs[:, c], pos))
    return float(np.mean(values))


METRICS = {
    "balanced_accuracy": balanced_accuracy,
    "auroc": macro_auroc,
    "f1": macro_f1,
}
