"""Support vector machine classifiers trained by sequential minimal optimization.

The dual soft-margin problem is solved with the simplified SMO scheme: sweep
the training points, and for each point violating its KKT condition pick a
second point (randomly first, then by exhaustive fallback), solve the
two-variable subproblem analytically, and repeat until a configurable number
of consecutive sweeps makes no progress. Multiclass problems train one
machine per unordered class pair and vote.

Models serialize to JSON at full float precision, so a reloaded model
reproduces decision values exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from baroleak.trace import Dataset, Label

MODEL_VERSION = 1

_SV_EPS = 1e-12  # alpha below this is not a support vector
_SNAP_EPS = 1e-10  # snap alphas this close to a box bound onto it


@dataclass(frozen=True)
class SvmParams:
    """Training knobs: kernel, box constraint, and SMO stopping behavior.

    gamma=None means the radial basis width defaults to 1 / (n_features *
    variance of the training matrix) at fit time. seed drives the SMO's
    random second-point choice only.
    """

    kernel: str = "linear"  # "linear" or "rbf"
    gamma: float | None = None
    c: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")


@dataclass(frozen=True, eq=False)
class BinaryMachine:
    """One trained pairwise machine: decision < 0 means neg, >= 0 means pos."""

    neg: Label
    pos: Label
    support_vectors: np.ndarray
    dual_coefs: np.ndarray  # alpha_i * y_i for each support vector
    bias: float


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained classifier: one machine for binary, k*(k-1)/2 for multiclass."""

    kernel: str
    gamma: float | None
    c: float
    tol: float
    n_features: int
    classes: tuple[Label, ...]
    machines: tuple[BinaryMachine, ...]
    train_meta: dict


def _kernel_block(kernel: str, gamma: float | None, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if kernel == "linear":
        return a @ b.T
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.clip(sq, 0.0, None, out=sq)
    return np.exp(-gamma * sq)


def _resolve_gamma(params: SvmParams, x: np.ndarray) -> float | None:
    if params.kernel != "rbf":
        return None
    if params.gamma is not None:
        return params.gamma
    var = float(x.var())
    d = x.shape[1]
    return 1.0 / (d * var) if var > 1e-24 else 1.0 / d


def dual_objective(kmat: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """Dual objective sum(alpha) - 1/2 (alpha*y)' K (alpha*y)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * (ay @ kmat @ ay))


def kkt_violation(kmat: np.ndarray, y: np.ndarray, alpha: np.ndarray, bias: float, c: float) -> float:
    """Largest KKT residual over the training set (0 when exactly optimal)."""
    margins = y * ((alpha * y) @ kmat + bias)
    viol = np.zeros_like(margins)
    at_zero = alpha <= _SV_EPS
    at_c = alpha >= c - _SNAP_EPS
    interior = ~(at_zero | at_c)
    viol[at_zero] = 1.0 - margins[at_zero]
    viol[at_c] = margins[at_c] - 1.0
    viol[interior] = np.abs(margins[interior] - 1.0)
    return float(max(0.0, viol.max())) if viol.size else 0.0


def smo_solve(
    kmat: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float,
    max_passes: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Solve the dual problem on a precomputed kernel matrix.

    Returns (alpha, bias). The equality constraint sum(alpha * y) = 0 is
    preserved by every two-variable update up to the bound-snapping epsilon.
    """
    n = y.size
    alpha = np.zeros(n)
    bias = 0.0
    f = np.zeros(n)  # cached decision values on the training set

    def try_pair(i: int, j: int) -> bool:
        nonlocal bias, f
        if i == j:
            return False
        a_i, a_j = alpha[i], alpha[j]
        y_i, y_j = y[i], y[j]
        e_i, e_j = f[i] - y_i, f[j] - y_j
        if y_i != y_j:
            lo, hi = max(0.0, a_j - a_i), min(c, c + a_j - a_i)
        else:
            lo, hi = max(0.0, a_i + a_j - c), min(c, a_i + a_j)
        if hi - lo < _SNAP_EPS:
            return False
        eta = kmat[i, i] + kmat[j, j] - 2.0 * kmat[i, j]
        if eta <= _SV_EPS:
            return False
        new_j = a_j + y_j * (e_i - e_j) / eta
        new_j = min(hi, max(lo, new_j))
        if new_j < _SNAP_EPS:
            new_j = 0.0
        elif new_j > c - _SNAP_EPS:
            new_j = c
        if abs(new_j - a_j) < 1e-9:
            return False
        new_i = a_i + y_i * y_j * (a_j - new_j)
        if new_i < _SNAP_EPS:
            new_i = 0.0
        elif new_i > c - _SNAP_EPS:
            new_i = c
        d_i, d_j = new_i - a_i, new_j - a_j
        b1 = bias - e_i - y_i * d_i * kmat[i, i] - y_j * d_j * kmat[i, j]
        b2 = bias - e_j - y_i * d_i * kmat[i, j] - y_j * d_j * kmat[j, j]
        if 0.0 < new_i < c:
            new_bias = b1
        elif 0.0 < new_j < c:
            new_bias = b2
        else:
            new_bias = 0.5 * (b1 + b2)
        f += y_i * d_i * kmat[i] + y_j * d_j * kmat[j] + (new_bias - bias)
        alpha[i], alpha[j] = new_i, new_j
        bias = new_bias
        return True

    passes = 0
    while passes < max_passes:
        changed = 0
        for i in range(n):
            r = y[i] * (f[i] - y[i])
            if not ((r < -tol and alpha[i] < c) or (r > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            if try_pair(i, j):
                changed += 1
                continue
            # random partner made no progress; sweep the rest in random order
            for j in rng.permutation(n):
                if try_pair(i, int(j)):
                    changed += 1
                    break
        passes = passes + 1 if changed == 0 else 0
    return alpha, bias


def _fit_machine(
    x: np.ndarray,
    y: np.ndarray,
    neg: Label,
    pos: Label,
    params: SvmParams,
    gamma: float | None,
    rng: np.random.Generator,
) -> BinaryMachine:
    kmat = _kernel_block(params.kernel, gamma, x, x)
    alpha, bias = smo_solve(kmat, y, params.c, params.tol, params.max_passes, rng)
    sv = alpha > _SV_EPS
    return BinaryMachine(neg, pos, x[sv].copy(), (alpha * y)[sv], float(bias))


def fit_matrix(
    x: np.ndarray,
    label_idx: np.ndarray,
    classes: Sequence[Label],
    params: SvmParams,
    train_meta: dict | None = None,
) -> SvmModel:
    """Train on an (n, d) matrix with per-row class indices.

    Binary problems map class 0 to decision -1 and class 1 to +1. Multiclass
    problems train one machine per pair (i, j), i < j, each on the rows of
    those two classes only. The radial basis width is resolved once from the
    full matrix so all pairwise machines share it.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != label_idx.size:
        raise ValueError("x must be (n, d) with one label index per row")
    if not np.all(np.isfinite(x)):
        raise ValueError("training matrix contains non-finite values")
    classes = tuple(classes)
    k = len(classes)
    if k < 2:
        raise ValueError("training requires at least 2 classes")
    counts = np.bincount(label_idx, minlength=k)
    gamma = _resolve_gamma(params, x)
    machines: list[BinaryMachine] = []
    pair_index = 0
    for i in range(k):
        for j in range(i + 1, k):
            if k == 2:
                mask = np.ones(len(x), dtype=bool)
            else:
                mask = (label_idx == i) | (label_idx == j)
            xs = x[mask]
            ys = np.where(label_idx[mask] == j, 1.0, -1.0)
            rng = np.random.default_rng(
                np.random.SeedSequence((params.seed & ((1 << 64) - 1), pair_index))
            )
            machines.append(
                _fit_machine(xs, ys, classes[i], classes[j], params, gamma, rng)
            )
            pair_index += 1
    meta = dict(train_meta or {})
    meta.update(
        {
            "n_records": int(x.shape[0]),
            "class_counts": {c.wire: int(n) for c, n in zip(classes, counts)},
            "params": _params_dict(params),
            "gamma_resolved": gamma,
        }
    )
    return SvmModel(
        params.kernel, gamma, params.c, params.tol, x.shape[1], classes, tuple(machines), meta
    )


def train_binary(
    dataset: Dataset, params: SvmParams = SvmParams(), extra_meta: dict | None = None
) -> SvmModel:
    """Train a binary machine on a two-class dataset.

    The class listed first in the dataset's class_set maps to decision -1,
    the second to +1; a point exactly on the boundary predicts the second.
    """
    if len(dataset.class_set) != 2:
        raise ValueError(f"binary training needs 2 classes, got {len(dataset.class_set)}")
    counts = dataset.class_counts()
    if min(counts.values()) < 1:
        raise ValueError("single-class dataset: both classes need records")
    return fit_matrix(
        dataset.windows_matrix(), dataset.label_indices(), dataset.class_set, params,
        train_meta=extra_meta,
    )


def train_multiclass(
    dataset: Dataset, params: SvmParams = SvmParams(), extra_meta: dict | None = None
) -> SvmModel:
    """Train a one-vs-one ensemble on a dataset with three or more classes."""
    if len(dataset.class_set) < 3:
        raise ValueError(f"multiclass training needs >= 3 classes, got {len(dataset.class_set)}")
    for label, count in dataset.class_counts().items():
        if count < 2:
            raise ValueError(f"class {label} has {count} record(s), need >= 2")
    return fit_matrix(
        dataset.windows_matrix(), dataset.label_indices(), dataset.class_set, params,
        train_meta=extra_meta,
    )


def train(
    dataset: Dataset, params: SvmParams = SvmParams(), extra_meta: dict | None = None
) -> SvmModel:
    """Train the model type matching the dataset's class count."""
    if len(dataset.class_set) == 2:
        return train_binary(dataset, params, extra_meta)
    return train_multiclass(dataset, params, extra_meta)


def _machine_decisions(model: SvmModel, machine: BinaryMachine, x: np.ndarray) -> np.ndarray:
    if machine.support_vectors.size == 0:
        return np.full(x.shape[0], machine.bias)
    kmat = _kernel_block(model.kernel, model.gamma, x, machine.support_vectors)
    return kmat @ machine.dual_coefs + machine.bias


def _as_feature_matrix(model: SvmModel, windows: np.ndarray) -> np.ndarray:
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(
            f"expected windows of length {model.n_features}, got shape {x.shape}"
        )
    return x


def decision_function(model: SvmModel, window: np.ndarray) -> float:
    """Signed distance-like score of a binary model for one window."""
    if len(model.machines) != 1:
        raise ValueError("decision_function applies to binary models only")
    x = _as_feature_matrix(model, window)
    return float(_machine_decisions(model, model.machines[0], x)[0])


def predict_scored(model: SvmModel, windows: np.ndarray) -> tuple[list[Label], np.ndarray]:
    """Predict labels plus a per-window score.

    Multiclass voting: every pairwise machine votes for its winning class; a
    point exactly on a machine's boundary votes for the class listed second
    (the machine's positive side). Vote ties break by the summed decision
    magnitude collected from won machines, then by lowest class index. The
    score is the raw decision value for binary models and the winner's summed
    won-machine magnitude for multiclass models.
    """
    x = _as_feature_matrix(model, windows)
    n = x.shape[0]
    if len(model.machines) == 1:
        mach = model.machines[0]
        f = _machine_decisions(model, mach, x)
        return [mach.pos if v >= 0 else mach.neg for v in f], f
    class_index = {label: i for i, label in enumerate(model.classes)}
    votes = np.zeros((n, len(model.classes)))
    magnitude = np.zeros((n, len(model.classes)))
    for mach in model.machines:
        f = _machine_decisions(model, mach, x)
        pos_side = f >= 0
        pi, ni = class_index[mach.pos], class_index[mach.neg]
        votes[pos_side, pi] += 1
        votes[~pos_side, ni] += 1
        magnitude[pos_side, pi] += f[pos_side]
        magnitude[~pos_side, ni] += -f[~pos_side]
    labels = []
    scores = np.empty(n)
    for row in range(n):
        best = min(
            range(len(model.classes)),
            key=lambda ci: (-votes[row, ci], -magnitude[row, ci], ci),
        )
        labels.append(model.classes[best])
        scores[row] = magnitude[row, best]
    return labels, scores


def predict_batch(model: SvmModel, windows: np.ndarray) -> list[Label]:
    """Predict labels for an (n, d) matrix of windows."""
    return predict_scored(model, windows)[0]


def predict(model: SvmModel, window: np.ndarray) -> Label:
    """Predict the label of a single window."""
    return predict_batch(model, np.asarray(window, dtype=np.float64)[None, :])[0]


def _params_dict(params: SvmParams) -> dict:
    return {
        "kernel": params.kernel,
        "gamma": params.gamma,
        "c": params.c,
        "tol": params.tol,
        "max_passes": params.max_passes,
        "seed": params.seed,
    }


def save_model(model: SvmModel) -> str:
    """Serialize a model to JSON text at full precision."""
    obj = {
        "version": MODEL_VERSION,
        "kernel": model.kernel,
        "gamma": model.gamma,
        "c": model.c,
        "tol": model.tol,
        "n_features": model.n_features,
        "classes": [label.wire for label in model.classes],
        "machines": [
            {
                "neg": m.neg.wire,
                "pos": m.pos.wire,
                "bias": m.bias,
                "dual_coefs": [float(v) for v in m.dual_coefs],
                "support_vectors": [[float(v) for v in row] for row in m.support_vectors],
            }
            for m in model.machines
        ],
        "train_meta": model.train_meta,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def load_model(text: str) -> SvmModel:
    """Parse a model serialized by save_model."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid model JSON ({exc.msg})") from None
    if not isinstance(obj, dict) or obj.get("version") != MODEL_VERSION:
        raise ValueError("unsupported or missing model version")
    classes = tuple(Label.from_wire(name) for name in obj["classes"])
    n_features = int(obj["n_features"])
    machines = []
    for m in obj["machines"]:
        sv = np.array(m["support_vectors"], dtype=np.float64).reshape(-1, n_features)
        machines.append(
            BinaryMachine(
                Label.from_wire(m["neg"]),
                Label.from_wire(m["pos"]),
                sv,
                np.array(m["dual_coefs"], dtype=np.float64),
                float(m["bias"]),
            )
        )
    return SvmModel(
        obj["kernel"],
        obj["gamma"],
        float(obj["c"]),
        float(obj["tol"]),
        n_features,
        classes,
        tuple(machines),
        dict(obj.get("train_meta", {})),
    )
