"""Stratified, patient-grouped cross-validation folds."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from ..errors import ParseError, ValidationError
from ..numkit import Rng
from ..slideio.manifest import CLASS_NAMES


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    train_patients: frozenset
    val_patients: frozenset

    def train_records(self, records) -> list:
        return [r for r in records if r.patient_id in self.train_patients]

    def val_records(self, records) -> list:
        return [r for r in records if r.patient_id in self.val_patients]

    def to_dict(self) -> dict:
        return {
            "fold_id": self.fold_id,
            "train_patients": sorted(self.train_patients),
            "val_patients": sorted(self.val_patients),
        }


def patient_labels(records) -> dict:
    """Patient id -> modal slide label (ties go to the lower label)."""
    votes: dict = {}
    for r in records:
        votes.setdefault(r.patient_id, Counter())[r.label] += 1
    return {p: min(c, key=lambda lab: (-c[lab], lab)) for p, c in votes.items()}


def make_folds(records, k: int = 5, seed: int = 0) -> list[FoldSplit]:
    """Assign patients to ``k`` validation folds, stratified by class.

    Each class's patients are shuffled (one substream per class) and dealt
    round-robin; the dealing position carries over from class to class so
    fold sizes differ by at most one.
    """
    if k < 2:
        raise ValidationError("need at least 2 folds")
    labels = patient_labels(records)
    by_class = {c: sorted(p for p, lab in labels.items() if lab == c) for c in range(len(CLASS_NAMES))}
    short = [CLASS_NAMES[c] for c, ps in by_class.items() if len(ps) < k]
    if short:
        raise ValidationError(f"classes with fewer than {k} patients: {', '.join(short)}")
    root = Rng(seed).substream("folds")
    val = [set() for _ in range(k)]
    pos = 0
    for c, patients in by_class.items():
        order = root.substream(f"class{c}").permutation(len(patients))
        for i in order:
            val[pos % k].add(patients[i])
            pos += 1
    everyone = frozenset(labels)
    return [FoldSplit(f, everyone - frozenset(v), frozenset(v)) for f, v in enumerate(val)]


def write_folds(path, folds, seed: int) -> None:
    doc = {"k": len(folds), "seed": seed, "folds": [f.to_dict() for f in folds]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_folds(path) -> list[FoldSplit]:
    try:
        doc = json.loads(Path(path).read_text())
        return [
            FoldSplit(int(f["fold_id"]), frozenset(f["train_patients"]), frozenset(f["val_patients"]))
            for f in doc["folds"]
        ]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: malformed folds file ({exc})") from exc
