"""Fold planning, cross validation bookkeeping, and report serialization."""

import numpy as np
import pytest

from baroleak.evaluate import (
    ConfusionMatrix,
    cross_validate,
    confusion_probabilities,
    dataset_fingerprint,
    probabilities_csv,
    probabilities_tidy_csv,
    report_from_json,
    report_to_json,
    stratified_kfold,
)
from baroleak.svm import SvmParams
from baroleak.trace import LabeledRecord, NO_TAP, TAP, key_label, make_dataset


KEYS = tuple(key_label(k) for k in range(1, 10))


def _dataset(class_sizes, d=2, spread=0.0, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    labels = labels or KEYS[: len(class_sizes)]
    recs = []
    for label, n, center in zip(labels, class_sizes, range(len(class_sizes))):
        for _ in range(n):
            recs.append(LabeledRecord(
                label, 6.0 * center + rng.normal(0, spread if spread else 1e-3, d)
            ))
    return make_dataset(recs)


# --------------------------------------------------------------- fold plan

def test_seven_records_split_2_2_1_1_1():
    ds = _dataset([7])
    plan = stratified_kfold(ds, 5, seed=0)
    sizes = sorted((plan.assignments == f).sum() for f in range(5))
    assert sizes == [1, 1, 1, 2, 2]


def test_folds_partition_and_stay_balanced():
    rng = np.random.default_rng(17)
    for _ in range(100):
        k = int(rng.integers(2, 6))
        n_classes = int(rng.integers(1, 5))
        sizes = [int(rng.integers(k, 4 * k)) for _ in range(n_classes)]
        ds = _dataset(sizes)
        plan = stratified_kfold(ds, k, seed=int(rng.integers(1 << 16)))
        assert plan.assignments.min() >= 0 and plan.assignments.max() < k
        assert plan.assignments.size == len(ds)
        labels = ds.label_indices()
        for ci in range(n_classes):
            per_fold = np.bincount(plan.assignments[labels == ci], minlength=k)
            assert per_fold.sum() == sizes[ci]
            assert per_fold.max() - per_fold.min() <= 1
        # train/test views cover every index exactly once per fold
        for fold in range(k):
            merged = np.sort(np.concatenate([plan.test_indices(fold), plan.train_indices(fold)]))
            np.testing.assert_array_equal(merged, np.arange(len(ds)))


def test_small_class_is_rejected():
    ds = _dataset([8, 3])
    with pytest.raises(ValueError, match="fewer than k"):
        stratified_kfold(ds, 5, seed=0)
    with pytest.raises(ValueError, match="k must be"):
        stratified_kfold(ds, 1, seed=0)


def test_fold_plan_seeding():
    ds = _dataset([20, 20])
    a = stratified_kfold(ds, 5, seed=3)
    b = stratified_kfold(ds, 5, seed=3)
    np.testing.assert_array_equal(a.assignments, b.assignments)
    plans = [stratified_kfold(ds, 5, seed=s).assignments for s in range(10)]
    assert any(not np.array_equal(plans[0], p) for p in plans[1:])


# -------------------------------------------------------- confusion matrix

def test_confusion_probabilities_column_stochastic():
    m = ConfusionMatrix((TAP, NO_TAP), np.array([[6, 0], [4, 10]]))
    probs, empty = confusion_probabilities(m)
    np.testing.assert_allclose(probs, [[0.6, 0.0], [0.4, 1.0]])
    assert empty == ()
    assert m.trace_accuracy == pytest.approx(16 / 20)
    assert m.total == 20


def test_confusion_empty_column_is_flagged_not_divided():
    m = ConfusionMatrix((TAP, NO_TAP), np.array([[5, 0], [0, 0]]))
    probs, empty = confusion_probabilities(m)
    assert empty == (1,)
    np.testing.assert_allclose(probs[:, 1], [0.0, 0.0])
    np.testing.assert_allclose(probs[:, 0], [1.0, 0.0])


def test_confusion_matrix_validation():
    with pytest.raises(ValueError):
        ConfusionMatrix((TAP, NO_TAP), np.zeros((3, 3), dtype=np.int64))
    with pytest.raises(ValueError):
        ConfusionMatrix((TAP, NO_TAP), np.array([[1, 0], [0, -1]]))


# ---------------------------------------------------------- cross validate

def test_separable_dataset_scores_one():
    ds = _dataset([10, 10], labels=(NO_TAP, TAP))
    report = cross_validate(ds, k=5, repeats=2, pipeline="", seed=0)
    assert report.mean_accuracy == 1.0
    assert report.per_run_accuracy == (1.0, 1.0)
    assert report.empty_columns == ()


def test_random_labels_score_near_chance():
    rng = np.random.default_rng(18)
    recs = [
        LabeledRecord(TAP if rng.random() < 0.5 else NO_TAP, rng.normal(0, 1, 4))
        for _ in range(80)
    ]
    ds = make_dataset(recs)
    report = cross_validate(ds, k=5, repeats=2, pipeline="", seed=1)
    assert 0.35 <= report.mean_accuracy <= 0.65


def test_confusion_columns_count_every_test_record():
    ds = _dataset([9, 12, 7], spread=1.5, seed=4)
    repeats = 3
    report = cross_validate(ds, k=5, repeats=repeats, pipeline="", seed=2)
    column_sums = report.confusion.counts.sum(axis=0)
    np.testing.assert_array_equal(column_sums, np.array([9, 12, 7]) * repeats)
    probs = report.confusion_prob
    np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-9)


def test_accuracy_identities():
    ds = _dataset([9, 12, 7], spread=2.0, seed=5)
    report = cross_validate(ds, k=5, repeats=4, pipeline="std", seed=3)
    # aggregate trace accuracy equals the test-size weighted fold mean
    folds = report.meta["fold_results"]
    correct = sum(f[2] for f in folds)
    total = sum(f[3] for f in folds)
    assert abs(report.confusion.trace_accuracy - correct / total) < 1e-12
    # the headline number is the unweighted mean over runs
    assert abs(report.mean_accuracy - np.mean(report.per_run_accuracy)) < 1e-12
    # and each run's accuracy is the unweighted mean of its fold accuracies
    for r, acc in enumerate(report.per_run_accuracy):
        fold_accs = [f[2] / f[3] for f in folds if f[0] == r]
        assert abs(acc - np.mean(fold_accs)) < 1e-12


def test_single_repeat_matches_first_run():
    ds = _dataset([8, 8], spread=1.0, labels=(NO_TAP, TAP), seed=6)
    ten = cross_validate(ds, k=4, repeats=3, pipeline="std", seed=9)
    one = cross_validate(ds, k=4, repeats=1, pipeline="std", seed=9)
    assert one.per_run_accuracy[0] == ten.per_run_accuracy[0]
    assert one.meta["fold_seeds"] == [9]
    assert ten.meta["fold_seeds"] == [9, 10, 11]


def test_cross_validate_is_deterministic():
    ds = _dataset([8, 8, 8], d=8, spread=1.0, seed=7)
    a = cross_validate(ds, k=4, repeats=2, pipeline="std|savgol(2,5)", seed=4,
                       params=SvmParams(kernel="rbf"))
    b = cross_validate(ds, k=4, repeats=2, pipeline="std|savgol(2,5)", seed=4,
                       params=SvmParams(kernel="rbf"))
    assert a.per_run_accuracy == b.per_run_accuracy
    assert a.confusion == b.confusion
    assert report_to_json(a) == report_to_json(b)


def test_report_meta_records_the_recipe():
    ds = _dataset([8, 8], d=8, labels=(NO_TAP, TAP))
    report = cross_validate(ds, k=4, repeats=2, pipeline="std|savgol(2,5)", seed=11)
    meta = report.meta
    assert meta["pipeline"] == "std|savgol(2,5)"
    assert meta["rng"] == "numpy PCG64"
    assert meta["k"] == 4 and meta["repeats"] == 2 and meta["seed"] == 11
    assert meta["dataset"]["fingerprint"] == dataset_fingerprint(ds)
    assert meta["dataset"]["classes"] == ["Tap", "NoTap"]
    assert meta["params"]["kernel"] == "linear"


def test_cross_validate_rejects_bad_repeats():
    ds = _dataset([8, 8], labels=(NO_TAP, TAP))
    with pytest.raises(ValueError):
        cross_validate(ds, repeats=0)


# ----------------------------------------------------------- serialization

def test_report_json_round_trip():
    ds = _dataset([7, 9, 8], spread=1.2, seed=8)
    report = cross_validate(ds, k=5, repeats=2, pipeline="std", seed=5)
    clone = report_from_json(report_to_json(report))
    assert clone.per_run_accuracy == report.per_run_accuracy
    assert clone.mean_accuracy == report.mean_accuracy
    assert clone.confusion == report.confusion
    np.testing.assert_array_equal(clone.confusion_prob, report.confusion_prob)
    assert clone.empty_columns == report.empty_columns
    assert clone.meta == report.meta
    assert report_to_json(clone) == report_to_json(report)


def test_report_json_rejects_garbage():
    with pytest.raises(ValueError):
        report_from_json("{")
    with pytest.raises(ValueError):
        report_from_json('{"version":99}')


def test_probabilities_csv_layout():
    m = ConfusionMatrix((TAP, NO_TAP), np.array([[6, 0], [4, 10]]))
    probs, empty = confusion_probabilities(m)
    report_like = report_from_json(report_to_json(
        __import__("baroleak.evaluate", fromlist=["EvalReport"]).EvalReport(
            (0.8,), 0.8, m, probs, empty, {})
    ))
    text = probabilities_csv(report_like)
    lines = text.splitlines()
    assert lines[0] == "predicted\\true,Tap,NoTap"
    assert lines[1] == "Tap,0.6,0.0"
    assert lines[2] == "NoTap,0.4,1.0"
    tidy = probabilities_tidy_csv(report_like)
    tidy_lines = tidy.splitlines()
    assert tidy_lines[0] == "predicted,true,probability"
    assert len(tidy_lines) == 1 + 4
    assert tidy_lines[1] == "Tap,Tap,0.6"
    assert tidy_lines[2] == "Tap,NoTap,0.0"


def test_tidy_csv_has_one_row_per_cell_for_nine_classes():
    counts = np.diag(np.arange(1, 10))
    m = ConfusionMatrix(KEYS, counts)
    probs, empty = confusion_probabilities(m)
    from baroleak.evaluate import EvalReport
    report = EvalReport((1.0,), 1.0, m, probs, empty, {})
    assert len(probabilities_tidy_csv(report).splitlines()) == 1 + 81
    grid = probabilities_csv(report).splitlines()
    assert len(grid) == 1 + 9
    assert grid[0].startswith("predicted\\true,Key(1),Key(2),")
