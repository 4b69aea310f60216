import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import mp_two_sided_p
from patchgraph import kernels
from patchgraph.errors import ParseError, ValidationError
from patchgraph.evalstat import (
    EvalReport,
    PredictionSet,
    balanced_accuracy,
    bh_adjust,
    bootstrap_ci,
    build_report,
    compare,
    comparison_json,
    confusion,
    macro_auroc,
    macro_f1,
    paired_t_test,
)
from patchgraph.evalstat.metrics import macro_f1_from_confusion
from patchgraph.evalstat.stats import betainc, t_cdf
from patchgraph.numkit import Rng


def onehot_preds(labels, predicted, ids=None):
    labels = np.asarray(labels)
    probs = np.zeros((len(labels), 5))
    probs[np.arange(len(labels)), predicted] = 1.0
    ids = ids or [f"s{i:03d}" for i in range(len(labels))]
    return PredictionSet(ids, labels, probs)


def random_preds(rng, n, decimals=None):
    labels = np.concatenate([np.arange(5), rng.integers(5, size=n - 5)])
    raw = rng.random((n, 5))
    if decimals is not None:
        raw = np.round(raw, decimals) + 1e-3  # ties within a column
    probs = raw / raw.sum(axis=1, keepdims=True)
    return PredictionSet([f"s{i:03d}" for i in range(n)], labels, probs)


# -- metrics ------------------------------------------------------------------

def test_perfect_predictions():
    p = onehot_preds(range(5), range(5))
    assert balanced_accuracy(p) == macro_f1(p) == macro_auroc(p) == 1.0


def test_balanced_accuracy_recall_arithmetic():
    labels = [0, 1, 1, 2, 3, 4]
    predicted = [0, 1, 0, 2, 3, 4]  # class 1 recall 0.5, others 1.0
    assert balanced_accuracy(onehot_preds(labels, predicted)) == pytest.approx(0.9, abs=1e-15)


def test_uniform_probabilities_predict_class_zero():
    labels = np.repeat(np.arange(5), 3)
    p = PredictionSet([str(i) for i in range(15)], labels, np.full((15, 5), 0.2))
    assert p.predicted.tolist() == [0] * 15
    assert balanced_accuracy(p) == pytest.approx(0.2)
    assert macro_auroc(p) == 0.5


def f1_oracle(cm):
    scores = []
    for c in range(5):
        tp = cm[c][c]
        fp = sum(cm[r][c] for r in range(5)) - tp
        fn = sum(cm[c]) - tp
        if tp == 0:
            scores.append(0.0)
            continue
        prec, rec = tp / (tp + fp), tp / (tp + fn)
        scores.append(2 * prec * rec / (prec + rec))
    return sum(scores) / 5


def test_f1_precision_one_recall_half():
    # classes 0-3: two slides each, one right and one sent to class 4
    cm = np.zeros((5, 5), dtype=np.int64)
    for c in range(4):
        cm[c, c] = cm[c, 4] = 1
    cm[4, 4] = 2
    per_class_0_to_3 = 2 * 1.0 * 0.5 / 1.5
    assert per_class_0_to_3 == pytest.approx(2 / 3)
    assert macro_f1_from_confusion(cm) == pytest.approx((4 * 2 / 3 + 2 * (2 / 6) * 1 / (2 / 6 + 1)) / 5)
    assert macro_f1_from_confusion(cm) == pytest.approx(f1_oracle(cm.tolist()))


def test_confusion_fixture_matches_oracle():
    rng = Rng(4)
    cm = rng.integers(6, size=(5, 5))
    cm[2, :] = 0
    cm[2, 2] = 3
    cm[:, 3] = 0  # class 3 never predicted
    labels, predicted = [], []
    for r in range(5):
        for c in range(5):
            labels += [r] * int(cm[r, c])
            predicted += [c] * int(cm[r, c])
    p = onehot_preds(labels, predicted)
    np.testing.assert_array_equal(confusion(p), cm)
    assert macro_f1(p) == pytest.approx(f1_oracle(cm.tolist()), abs=1e-15)
    assert balanced_accuracy(p) == pytest.approx(np.mean([cm[c, c] / cm[c].sum() for c in range(5)]))


def test_missing_class_rejected():
    p = onehot_preds([0, 1, 2, 3], [0, 1, 2, 3])
    for fn in (balanced_accuracy, macro_f1, macro_auroc):
        with pytest.raises(ValidationError):
            fn(p)


def auroc_oracle(scores, positive):
    pos = [s for s, y in zip(scores, positive) if y]
    neg = [s for s, y in zip(scores, positive) if not y]
    total = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return total / (len(pos) * len(neg))


@pytest.mark.parametrize("seed", range(50))
def test_macro_auroc_matches_pairwise_oracle(seed):
    rng = Rng(seed)
    p = random_preds(rng, 30, decimals=1 if seed % 2 else None)
    expected = np.mean([auroc_oracle(p.probs[:, c], p.labels == c) for c in range(5)])
    assert abs(macro_auroc(p) - expected) < 1e-12


def test_auroc_monotone_transform_invariant():
    rng = Rng(3)
    p = random_preds(rng, 40)
    for c in range(5):
        s, y = p.probs[:, c], p.labels == c
        base = kernels.auroc_binary(s, y)
        assert kernels.auroc_binary(np.exp(3 * s) - 7, y) == base
        assert kernels.auroc_binary(s ** 3, y) == base


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_metrics_invariant_under_slide_order(seed):
    rng = Rng(seed)
    p = random_preds(rng, 25)
    q = p.take(rng.permutation(25))
    for fn in (balanced_accuracy, macro_f1, macro_auroc):
        assert fn(p) == fn(q)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_label_metrics_depend_only_on_argmax(seed):
    rng = Rng(seed)
    p = random_preds(rng, 25)
    # new rows with the same argmax: put the max on a fresh random profile
    raw = rng.random((25, 5)) * 0.5
    raw[np.arange(25), p.predicted] = 1.0
    q = PredictionSet(p.slide_ids, p.labels, raw / raw.sum(axis=1, keepdims=True))
    assert balanced_accuracy(p) == balanced_accuracy(q)
    assert macro_f1(p) == macro_f1(q)


def test_prediction_set_validation():
    with pytest.raises(ValidationError):
        PredictionSet(["a"], [0], [[0.5, 0.5, 0.1, 0, 0]])
    with pytest.raises(ValidationError):
        PredictionSet(["a"], [5], [[1, 0, 0, 0, 0]])


# -- t-test and BH --------------------------------------------------------------

def test_identical_vectors_degenerate():
    r = paired_t_test([0.8, 0.7, 0.9, 0.6, 0.75], [0.8, 0.7, 0.9, 0.6, 0.75])
    assert r.p == 1.0 and r.degenerate == "no_difference"


def test_zero_mean_difference():
    b = np.array([0.5, 0.5, 0.5, 0.5, 0.5])
    r = paired_t_test(b + [1, -1, 1, -1, 0], b)
    assert r.t == 0.0 and r.p == pytest.approx(1.0, abs=1e-15) and r.degenerate is None


def test_zero_variance_degenerate():
    r = paired_t_test([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])
    assert r.p == 0.0 and r.degenerate == "zero_variance" and r.t == math.inf


T_FIXTURES = [([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])] + [
    (Rng(s).normal(size=5).tolist(), Rng(s + 100).normal(size=5).tolist()) for s in range(7)
] + [
    ([0.91, 0.93, 0.95, 0.92, 0.94], [0.90, 0.90, 0.91, 0.92, 0.89]),
    ([10.0, 10.1, 9.9, 10.2, 10.05, 9.95, 10.3, 10.0, 10.1, 9.8], [0.0] * 10),
]


@pytest.mark.parametrize("a,b", T_FIXTURES)
def test_t_test_matches_high_precision_reference(a, b):
    assert len(T_FIXTURES) == 10
    assert abs(paired_t_test(a, b).p - mp_two_sided_p(a, b)) < 1e-6


@pytest.mark.parametrize("a,b,x", [(2.0, 0.5, 0.3), (0.5, 0.5, 0.99), (20.0, 0.5, 0.999), (1.5, 3.0, 0.5)])
def test_betainc_matches_mpmath(a, b, x):
    ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert abs(betainc(a, b, x) - ref) < 1e-12


def test_t_cdf_symmetry():
    assert t_cdf(0.0, 4) == pytest.approx(0.5)
    assert t_cdf(1.3, 7) + t_cdf(-1.3, 7) == pytest.approx(1.0, abs=1e-14)


def test_bh_examples():
    np.testing.assert_allclose(bh_adjust([0.01, 0.02, 0.03]), [0.03, 0.03, 0.03], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(bh_adjust([0.2]), [0.2])
    np.testing.assert_allclose(bh_adjust([0.04, 0.01, 0.5]), [0.06, 0.03, 0.5])
    with pytest.raises(ValidationError):
        bh_adjust([0.5, 1.2])


def bh_oracle(p):
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    out = [0.0] * m
    for rank, i in enumerate(order, start=1):
        out[i] = min(1.0, min(m * p[order[j - 1]] / j for j in range(rank, m + 1)))
    return out


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12), st.floats(0.001, 0.5))
def test_bh_properties(p, alpha):
    adj = bh_adjust(p)
    np.testing.assert_allclose(adj, bh_oracle(p), rtol=1e-12, atol=0)
    assert np.all(adj >= np.asarray(p) - 1e-15)
    order = np.argsort(p, kind="mergesort")
    assert np.all(np.diff(adj[order]) >= 0)
    rejected = adj[order] <= alpha
    if rejected.any():
        assert rejected[: np.max(np.nonzero(rejected)) + 1].all()


# -- bootstrap ----------------------------------------------------------------

def balanced_fixture():
    labels = np.repeat(np.arange(5), 2)
    predicted = labels.copy()
    predicted[[1, 3]] = [2, 4]  # classes 0 and 1 each miss one slide
    return onehot_preds(labels, predicted)


def test_bootstrap_constant_metric():
    res = bootstrap_ci(random_preds(Rng(0), 20), lambda p: 0.7, iters=200, seed=1)
    assert res.mean == pytest.approx(0.7) and res.ci_low == res.mean == res.ci_high


def test_bootstrap_seed_determinism():
    p = random_preds(Rng(1), 30)
    a = bootstrap_ci(p, macro_auroc, iters=300, seed=5)
    assert a == bootstrap_ci(p, macro_auroc, iters=300, seed=5)
    assert a != bootstrap_ci(p, macro_auroc, iters=300, seed=6)
    assert a.ci_low <= a.mean <= a.ci_high


def test_bootstrap_full_resample_is_point_estimate():
    p = balanced_fixture()
    res = bootstrap_ci(p, balanced_accuracy, iters=1, resampler=lambda rng, n: np.arange(n))
    assert res.mean == res.ci_low == res.ci_high == balanced_accuracy(p)


def test_bootstrap_mean_close_to_point_metric():
    p = balanced_fixture()
    point = balanced_accuracy(p)
    a = bootstrap_ci(p, balanced_accuracy, iters=10000, seed=11)
    b = bootstrap_ci(p, balanced_accuracy, iters=10000, seed=12)
    assert abs(a.mean - point) < 0.02 and abs(b.mean - point) < 0.02
    assert a.redraws > 0  # small resamples often miss a class


def test_bootstrap_order_independent():
    p = random_preds(Rng(2), 30)
    q = p.take(Rng(3).permutation(30))
    assert bootstrap_ci(p, macro_f1, 200, 4) == bootstrap_ci(q, macro_f1, 200, 4)


def test_bootstrap_mostly_undefined_errors():
    def flaky(preds):
        raise ValidationError("never defined")

    with pytest.raises(ValidationError, match="half"):
        bootstrap_ci(balanced_fixture(), flaky, iters=10)


# -- reports ------------------------------------------------------------------

def make_report(seed, shift=0.0):
    rng = Rng(seed)
    p = random_preds(rng, 25)
    folds = [random_preds(rng, 25) for _ in range(5)]
    rep = build_report(p, folds, iters=50, seed=seed)
    if shift:
        rep.per_fold = {k: [v + shift * (i + 1) for i, v in enumerate(vals)] for k, vals in rep.per_fold.items()}
    return rep


def test_report_roundtrip(tmp_path):
    rep = make_report(0)
    (tmp_path / "r.json").write_text(rep.to_json())
    back = EvalReport.load(tmp_path / "r.json")
    assert back.to_json() == rep.to_json()
    doc = json.loads(rep.to_json())
    assert set(doc) == {"metrics", "per_fold", "confusion", "bootstrap_iters", "seed"}
    assert set(doc["metrics"]) == {"balanced_accuracy", "auroc", "f1"}
    for m in doc["metrics"].values():
        assert m["ci_low"] <= m["mean"] <= m["ci_high"]
    assert len(doc["per_fold"]["f1"]) == 5
    assert np.sum(doc["confusion"]) == 25


def test_report_rejects_bad_schema(tmp_path):
    doc = json.loads(make_report(0).to_json())
    doc["extra"] = 1
    with pytest.raises(ParseError):
        EvalReport.from_dict(doc)
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ParseError):
        EvalReport.load(tmp_path / "bad.json")


def test_compare_against_itself():
    rep = make_report(1)
    table = compare(rep, {"same": rep})
    for rows in table["comparisons"].values():
        assert rows[0]["p"] == 1.0 and rows[0]["degenerate"] == "no_difference"
        assert rows[0]["p_adjusted"] == 1.0


def test_compare_applies_bh_per_metric():
    base = make_report(2)
    others = {"a": make_report(3), "b": make_report(4)}
    adj = compare(base, others, "bh")
    raw = compare(base, others, "none")
    for metric in adj["comparisons"]:
        p = [r["p"] for r in raw["comparisons"][metric]]
        np.testing.assert_allclose([r["p_adjusted"] for r in adj["comparisons"][metric]], bh_adjust(p))
        assert [r["p_adjusted"] for r in raw["comparisons"][metric]] == p


def test_comparison_json_handles_infinite_t():
    base = make_report(5)
    base.per_fold = {k: [0.5, 0.25, 0.75, 0.5, 0.125] for k in base.per_fold}
    other = make_report(5)
    other.per_fold = {k: [v + 0.125 for v in vals] for k, vals in base.per_fold.items()}  # exact shift
    doc = json.loads(comparison_json(compare(base, {"o": other})))
    row = doc["comparisons"]["auroc"][0]
    assert row["degenerate"] == "zero_variance" and row["t"] == "inf" and row["p"] == 0.0
