"""Metrics, bootstrap intervals, paired tests and evaluation reports."""
from .bootstrap import BootstrapResult, bootstrap_ci, resample_with_replacement
from .evaluate import evaluate, predict_out_of_fold, predict_records
from .metrics import (
    METRICS,
    PredictionSet,
    balanced_accuracy,
    balanced_accuracy_from_confusion,
    confusion,
    macro_auroc,
    macro_f1,
    macro_f1_from_confusion,
)
from .report import EvalReport, atomic_write, build_report, compare, comparison_json
from .stats import TTestResult, betainc, bh_adjust, paired_t_test, t_cdf, t_sf_two_sided

__all__ = [
    "BootstrapResult", "EvalReport", "METRICS", "PredictionSet", "TTestResult", "atomic_write",
    "balanced_accuracy", "balanced_accuracy_from_confusion", "betainc", "bh_adjust",
    "bootstrap_ci", "build_report", "compare", "comparison_json", "confusion", "evaluate",
    "macro_auroc", "macro_f1", "macro_f1_from_confusion", "paired_t_test", "predict_out_of_fold",
    "predict_records", "resample_with_replacement", "t_cdf", "t_sf_two_sided",
]
