"""Evaluation reports and paired model comparison."""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParseError, ValidationError
from .bootstrap import bootstrap_ci
from .metrics import METRICS, N_CLASSES, PredictionSet, confusion
from .stats import bh_adjust, paired_t_test

REPORT_KEYS = ("metrics", "per_fold", "confusion", "bootstrap_iters", "seed")


@dataclass
class EvalReport:
    metrics: dict  # name -> {"mean", "ci_low", "ci_high"}
    per_fold: dict  # name -> list of per-fold values (None where undefined)
    confusion: list  # 5x5 counts
    bootstrap_iters: int
    seed: int

    def __post_init__(self):
        for name, m in self.metrics.items():
            if set(m) != {"mean", "ci_low", "ci_high"}:
                raise ValidationError(f"metric {name} needs mean, ci_low and ci_high")
        cm = np.asarray(self.confusion)
        if cm.shape != (N_CLASSES, N_CLASSES):
            raise ValidationError("confusion matrix must be 5x5")

    def to_dict(self) -> dict:
        return {
            "metrics": {k: dict(v) for k, v in self.metrics.items()},
            "per_fold": {k: list(v) for k, v in self.per_fold.items()},
            "confusion": [list(map(int, row)) for row in self.confusion],
            "bootstrap_iters": int(self.bootstrap_iters),
            "seed": int(self.seed),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc) -> "EvalReport":
        if not isinstance(doc, dict) or set(doc) != set(REPORT_KEYS):
            raise ParseError(f"report must have exactly the keys {', '.join(REPORT_KEYS)}")
        try:
            return cls(
                metrics={k: {f: float(x) for f, x in v.items()} for k, v in doc["metrics"].items()},
                per_fold={k: [None if x is None else float(x) for x in v] for k, v in doc["per_fold"].items()},
                confusion=[[int(x) for x in row] for row in doc["confusion"]],
                bootstrap_iters=int(doc["bootstrap_iters"]),
                seed=int(doc["seed"]),
            )
        except (AttributeError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed report: {exc}") from exc

    @classmethod
    def load(cls, path) -> "EvalReport":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _safe(metric, preds):
    try:
        return float(metric(preds))
    except ValidationError:
        return None


def build_report(preds: PredictionSet, fold_preds, iters: int = 10000, seed: int = 0) -> EvalReport:
    """Bootstrap every metric on ``preds``; ``fold_preds`` holds one
    PredictionSet per cross-validation model for the per-fold values."""
    metrics = {}
    for name, fn in METRICS.items():
        res = bootstrap_ci(preds, fn, iters, seed)
        metrics[name] = {"mean": res.mean, "ci_low": res.ci_low, "ci_high": res.ci_high}
    per_fold = {name: [_safe(fn, fp.canonical()) for fp in fold_preds] for name, fn in METRICS.items()}
    return EvalReport(metrics, per_fold, confusion(preds).tolist(), iters, seed)


def compare(baseline: EvalReport, others: dict, adjust: str | None = "bh") -> dict:
    """Paired t-tests of each report in ``others`` against ``baseline`` on
    per-fold values, per metric. With ``adjust="bh"`` the p-values of each
    metric are adjusted across the reports compared in this call."""
    if adjust not in (None, "none", "bh"):
        raise ValidationError(f"unknown adjustment {adjust!r}")
    names = list(others)
    out = {"adjust": adjust or "none", "comparisons": {}}
    for metric in sorted(baseline.per_fold):
        base = baseline.per_fold[metric]
        rows = []
        for name in names:
            vals = others[name].per_fold.get(metric)
            if vals is None or len(vals) != len(base):
                raise ValidationError(f"{name}: per-fold {metric} values do not pair with the baseline")
            if any(v is None for v in vals) or any(v is None for v in base):
                raise ValidationError(f"{name}: per-fold {metric} has undefined folds")
            rows.append(paired_t_test(vals, base))
        raw = [r.p for r in rows]
        adj = bh_adjust(raw) if adjust == "bh" and raw else raw
        out["comparisons"][metric] = [
            {"model": name, **r.to_dict(), "p_adjusted": float(a)}
            for name, r, a in zip(names, rows, adj)
        ]
    return out


def comparison_json(table: dict) -> str:
    def clean(x):
        if isinstance(x, float) and math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, list):
            return [clean(v) for v in x]
        return x
    return json.dumps(clean(table), indent=2, sort_keys=True) + "\n"
