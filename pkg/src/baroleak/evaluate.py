"""Cross-validated evaluation: stratified folds, confusion counts, reports.

The evaluation protocol is repeated stratified k-fold cross validation:
for each repeat a fresh stratified fold assignment is drawn, every fold is
held out once, and the run's accuracy is the mean of its k fold accuracies.
Confusion counts aggregate over all repeats and folds with the convention
counts[i][j] = times class i was predicted when class j was true, so each
column sums to that class's total test appearances.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from baroleak.prep import transform_dataset
from baroleak.sim import RNG_ALGORITHM
from baroleak.svm import SvmParams, _params_dict, fit_matrix, predict_batch
from baroleak.trace import Dataset, Label, write_dataset

REPORT_VERSION = 1

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Stratified assignment of each record to one of k folds."""

    k: int
    seed: int
    assignments: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.assignments, dtype=np.intp).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "assignments", arr)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(dataset: Dataset, k: int, seed: int) -> FoldPlan:
    """Assign records to k folds, stratified by class.

    Within each class the record order is permuted with the seeded generator
    and dealt round-robin to folds 0..k-1, so per-class fold counts never
    differ by more than one and every record lands in exactly one fold.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    counts = dataset.class_counts()
    for label, count in counts.items():
        if count < k:
            raise ValueError(f"class {label} has {count} record(s), fewer than k={k}")
    rng = np.random.default_rng(np.random.SeedSequence((seed & _SEED_MASK,)))
    labels = dataset.label_indices()
    assignments = np.empty(len(dataset), dtype=np.intp)
    for ci in range(len(dataset.class_set)):
        members = np.flatnonzero(labels == ci)
        order = rng.permutation(members)
        assignments[order] = np.arange(order.size) % k
    return FoldPlan(k, seed, assignments)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Aggregated counts, counts[i][j] = predicted class i when class j is true."""

    classes: tuple[Label, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if arr.shape != (k, k):
            raise ValueError(f"counts must be ({k}, {k}), got {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("counts must be non-negative")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace_accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.counts, other.counts)


def confusion_probabilities(matrix: ConfusionMatrix) -> tuple[np.ndarray, tuple[int, ...]]:
    """Column-normalize counts into per-true-class probabilities.

    Each column gives P(predicted | true) and sums to one. Columns with zero
    observations stay all-zero and their indices come back in the second
    element so callers can flag them.
    """
    counts = matrix.counts.astype(np.float64)
    sums = counts.sum(axis=0)
    empty = tuple(int(i) for i in np.flatnonzero(sums == 0))
    safe = np.where(sums == 0, 1.0, sums)
    return counts / safe, empty


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Everything one evaluation run produced."""

    per_run_accuracy: tuple[float, ...]
    mean_accuracy: float
    confusion: ConfusionMatrix
    confusion_prob: np.ndarray
    empty_columns: tuple[int, ...]
    meta: dict

    def __post_init__(self) -> None:
        arr = np.asarray(self.confusion_prob, dtype=np.float64).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "confusion_prob", arr)
        object.__setattr__(self, "per_run_accuracy", tuple(self.per_run_accuracy))


def dataset_fingerprint(dataset: Dataset) -> str:
    """Short stable digest of a dataset's serialized form."""
    return hashlib.sha256(write_dataset(dataset).encode()).hexdigest()[:16]


def cross_validate(
    dataset: Dataset,
    k: int = 5,
    repeats: int = 10,
    params: SvmParams = SvmParams(),
    pipeline: str = "std",
    seed: int = 0,
) -> EvalReport:
    """Repeated stratified k-fold cross validation of an SVM on a dataset.

    The prep pipeline (strictly per-record transforms) is applied once up
    front. Repeat r draws its fold plan with seed + r. A run's accuracy is
    the unweighted mean of its k fold accuracies; mean_accuracy is the mean
    over runs. Per-fold correct/total pairs are kept in meta["fold_results"]
    so the aggregate confusion trace can be cross-checked against the
    weighted fold mean.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    fingerprint = dataset_fingerprint(dataset)
    working = transform_dataset(dataset, pipeline)
    x = working.windows_matrix()
    labels = working.label_indices()
    classes = working.class_set
    kc = len(classes)
    counts = np.zeros((kc, kc), dtype=np.int64)
    per_run: list[float] = []
    fold_results: list[list[int]] = []  # [repeat, fold, correct, total]
    class_index = {label: i for i, label in enumerate(classes)}
    for r in range(repeats):
        plan = stratified_kfold(working, k, seed + r)
        fold_accs = []
        for fold in range(k):
            test = plan.test_indices(fold)
            train_idx = plan.train_indices(fold)
            model = fit_matrix(x[train_idx], labels[train_idx], classes, params)
            predicted = predict_batch(model, x[test])
            correct = 0
            for row, pred in zip(test, predicted):
                true_i = labels[row]
                pred_i = class_index[pred]
                counts[pred_i, true_i] += 1
                correct += int(pred_i == true_i)
            fold_accs.append(correct / test.size)
            fold_results.append([r, fold, correct, int(test.size)])
        per_run.append(float(np.mean(fold_accs)))

    confusion = ConfusionMatrix(classes, counts)
    probs, empty = confusion_probabilities(confusion)
    meta = {
        "k": k,
        "repeats": repeats,
        "seed": seed,
        "fold_seeds": [seed + r for r in range(repeats)],
        "params": _params_dict(params),
        "pipeline": pipeline,
        "rng": RNG_ALGORITHM,
        "dataset": {
            "n_records": len(dataset),
            "window_len": dataset.window_len,
            "classes": [label.wire for label in classes],
            "fingerprint": fingerprint,
        },
        "fold_results": fold_results,
    }
    return EvalReport(
        tuple(per_run), float(np.mean(per_run)), confusion, probs, empty, meta
    )


def report_to_json(report: EvalReport) -> str:
    """Serialize a report to deterministic JSON text."""
    obj = {
        "version": REPORT_VERSION,
        "classes": [label.wire for label in report.confusion.classes],
        "per_run_accuracy": [float(a) for a in report.per_run_accuracy],
        "mean_accuracy": report.mean_accuracy,
        "confusion": [[int(v) for v in row] for row in report.confusion.counts],
        "confusion_prob": [[float(v) for v in row] for row in report.confusion_prob],
        "empty_columns": list(report.empty_columns),
        "meta": report.meta,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def report_from_json(text: str) -> EvalReport:
    """Parse a report serialized by report_to_json."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid report JSON ({exc.msg})") from None
    if not isinstance(obj, dict) or obj.get("version") != REPORT_VERSION:
        raise ValueError("unsupported or missing report version")
    classes = tuple(Label.from_wire(name) for name in obj["classes"])
    confusion = ConfusionMatrix(classes, np.array(obj["confusion"], dtype=np.int64))
    return EvalReport(
        tuple(float(a) for a in obj["per_run_accuracy"]),
        float(obj["mean_accuracy"]),
        confusion,
        np.array(obj["confusion_prob"], dtype=np.float64),
        tuple(int(i) for i in obj["empty_columns"]),
        dict(obj.get("meta", {})),
    )


def probabilities_csv(report: EvalReport) -> str:
    """Probability matrix as CSV, rows = predicted class, columns = true class."""
    names = [label.wire for label in report.confusion.classes]
    lines = ["predicted\\true," + ",".join(names)]
    for i, name in enumerate(names):
        row = ",".join(repr(float(v)) for v in report.confusion_prob[i])
        lines.append(f"{name},{row}")
    return "\n".join(lines) + "\n"


def probabilities_tidy_csv(report: EvalReport) -> str:
    """Probability matrix as a tidy CSV with one (predicted, true, p) row per cell."""
    names = [label.wire for label in report.confusion.classes]
    lines = ["predicted,true,probability"]
    for i, pred in enumerate(names):
        for j, true in enumerate(names):
            lines.append(f"{pred},{true},{float(report.confusion_prob[i, j])!r}")
    return "\n".join(lines) + "\n"
