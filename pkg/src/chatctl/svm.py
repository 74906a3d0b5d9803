"""Multiclass kernel SVM trained by sequential minimal optimization.

One binary machine per unordered class pair (one-vs-one), combined by
majority vote with a bounded margin tiebreak. The SMO loop optimizes the
maximal KKT-violating pair until the violation gap drops below tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .errors import TrainingError
from .splits import stratified_kfold

KERNEL_KINDS = ("linear", "poly", "sigmoid", "rbf")
DEFAULT_C_GRID = (1.0, 2.0, 5.0, 10.0, 20.0, 100.0)
KKT_TOL = 1e-3


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    gamma: float | None = None  # None resolves to 1/dimension at training time
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise TrainingError(f"unknown kernel kind {self.kind!r}")
        if self.gamma is not None and self.gamma <= 0:
            raise TrainingError("gamma must be positive")
        if self.kind == "poly" and self.degree < 2:
            raise TrainingError("poly degree must be at least 2")

    def resolve(self, dimension: int) -> "KernelSpec":
        if self.kind != "linear" and self.gamma is None:
            return replace(self, gamma=1.0 / dimension)
        return self


def kernel_matrix(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gram matrix K[i, j] = k(x_i, y_j)."""
    dots = x @ y.T
    if spec.kind == "linear":
        return dots
    if spec.kind == "poly":
        return (spec.gamma * dots + spec.coef0) ** spec.degree
    if spec.kind == "sigmoid":
        return np.tanh(spec.gamma * dots + spec.coef0)
    sq = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(y * y, axis=1)[None, :]
        - 2.0 * dots
    )
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class PairMachine:
    class_a: str  # y = +1
    class_b: str  # y = -1
    support_vectors: np.ndarray  # (s, d)
    dual_coef: np.ndarray  # alpha_i * y_i, length s
    bias: float
    sv_indices: tuple[int, ...]  # indices into the training data


@dataclass(frozen=True)
class SvmModel:
    classes: tuple[str, ...]
    kernel: KernelSpec
    C: float
    machines: tuple[PairMachine, ...]
    dimension: int


@dataclass(frozen=True)
class IntentPrediction:
    ranking: tuple[tuple[str, float], ...]  # (intent, confidence), descending

    @property
    def intent(self) -> str:
        return self.ranking[0][0]

    @property
    def confidence(self) -> float:
        return self.ranking[0][1]


def _smo(kernel: np.ndarray, y: np.ndarray, c: float, tol: float, max_steps: int):
    """Binary SMO on a precomputed Gram matrix. Returns (alpha, bias)."""
    n = len(y)
    alpha = np.zeros(n)
    u = np.zeros(n)  # decision values without bias: K @ (alpha * y)
    eps = 1e-12
    for _ in range(max_steps):
        v = y - u
        up = ((y > 0) & (alpha < c - eps)) | ((y < 0) & (alpha > eps))
        low = ((y < 0) & (alpha < c - eps)) | ((y > 0) & (alpha > eps))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        if v[i] - v[j] <= tol:
            break
        if y[i] != y[j]:
            lo = max(0.0, alpha[j] - alpha[i])
            hi = min(c, c + alpha[j] - alpha[i])
        else:
            lo = max(0.0, alpha[i] + alpha[j] - c)
            hi = min(c, alpha[i] + alpha[j])
        if hi - lo < eps:
            break
        eta = max(kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j], eps)
        err_i = u[i] - y[i]
        err_j = u[j] - y[j]
        aj = float(np.clip(alpha[j] + y[j] * (err_i - err_j) / eta, lo, hi))
        if abs(aj - alpha[j]) < eps:
            break
        ai = alpha[i] + y[i] * y[j] * (alpha[j] - aj)
        u += (ai - alpha[i]) * y[i] * kernel[:, i] + (aj - alpha[j]) * y[j] * kernel[:, j]
        alpha[i], alpha[j] = ai, aj
    v = y - u
    up = ((y > 0) & (alpha < c - eps)) | ((y < 0) & (alpha > eps))
    low = ((y < 0) & (alpha < c - eps)) | ((y > 0) & (alpha > eps))
    if up.any() and low.any():
        bias = (float(np.max(v[up])) + float(np.min(v[low]))) / 2.0
    elif up.any():
        bias = float(np.max(v[up]))
    elif low.any():
        bias = float(np.min(v[low]))
    else:
        bias = 0.0
    return alpha, bias


def train_svm(
    data: list[tuple[np.ndarray, str]], kernel: KernelSpec, c: float
) -> SvmModel:
    """Train one-vs-one machines to KKT tolerance 1e-3.

    Deterministic: classes and pairs are visited in lexicographic order and
    the pair selection rule breaks ties by lowest index.
    """
    if c <= 0:
        raise TrainingError("C must be positive")
    if not data:
        raise TrainingError("training data is empty")
    dimension = int(np.asarray(data[0][0]).shape[0])
    for vec, _ in data:
        if np.asarray(vec).shape != (dimension,):
            raise TrainingError("all vectors must share one dimension")
    by_class: dict[str, list[int]] = {}
    for idx, (_, label) in enumerate(data):
        by_class.setdefault(label, []).append(idx)
    classes = tuple(sorted(by_class))
    if len(classes) < 2:
        raise TrainingError("need at least 2 classes")
    resolved = kernel.resolve(dimension)
    matrix = np.stack([np.asarray(vec, dtype=np.float64) for vec, _ in data])

    machines: list[PairMachine] = []
    for class_a, class_b in combinations(classes, 2):
        indices = by_class[class_a] + by_class[class_b]
        x = matrix[indices]
        y = np.array([1.0] * len(by_class[class_a]) + [-1.0] * len(by_class[class_b]))
        gram = kernel_matrix(resolved, x, x)
        max_steps = 10 * len(indices) * len(DEFAULT_C_GRID)
        alpha, bias = _smo(gram, y, c, KKT_TOL, max_steps)
        keep = alpha > 1e-12
        machines.append(
            PairMachine(
                class_a=class_a,
                class_b=class_b,
                support_vectors=x[keep].copy(),
                dual_coef=(alpha * y)[keep].copy(),
                bias=bias,
                sv_indices=tuple(int(indices[k]) for k in np.flatnonzero(keep)),
            )
        )
    return SvmModel(
        classes=classes,
        kernel=resolved,
        C=float(c),
        machines=tuple(machines),
        dimension=dimension,
    )


def decision_value(model: SvmModel, machine: PairMachine, vec: np.ndarray) -> float:
    """Signed distance-like score: positive favors class_a."""
    if machine.support_vectors.shape[0] == 0:
        return machine.bias
    row = kernel_matrix(model.kernel, vec[None, :], machine.support_vectors)[0]
    return float(row @ machine.dual_coef + machine.bias)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def predict_intent(model: SvmModel, vec: np.ndarray) -> IntentPrediction:
    """Vote over pairwise machines; confidence is a softmax over
    votes + a bounded margin tiebreak that can never flip the vote order."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (model.dimension,):
        raise ValueError(
            f"input has shape {vec.shape}, model expects ({model.dimension},)"
        )
    votes = {c: 0.0 for c in model.classes}
    margins = {c: 0.0 for c in model.classes}
    for machine in model.machines:
        d = decision_value(model, machine, vec)
        if d > 0:
            votes[machine.class_a] += 1.0
        elif d < 0:
            votes[machine.class_b] += 1.0
        margins[machine.class_a] += d
        margins[machine.class_b] -= d
    n = len(model.classes)
    scores = np.array(
        [votes[c] + _sigmoid(margins[c]) / n for c in model.classes]
    )
    exps = np.exp(scores - scores.max())
    probs = exps / exps.sum()
    ranking = sorted(
        zip(model.classes, (float(p) for p in probs)),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return IntentPrediction(ranking=tuple(ranking))


@dataclass(frozen=True)
class GridSearchResult:
    best_c: float
    table: tuple[tuple[float, float], ...]  # (C, mean accuracy percent)


def grid_search_C(
    data: list[tuple[np.ndarray, str]],
    kernel: KernelSpec,
    grid: tuple[float, ...] = DEFAULT_C_GRID,
    folds: int = 5,
    seed: int = 0,
) -> GridSearchResult:
    """Pick the C maximizing mean cross-validated accuracy; ties go to the
    smaller C. Accuracies are percentages."""
    if not grid:
        raise TrainingError("C grid is empty")
    labels = [label for _, label in data]
    if len(set(labels)) < 2:
        raise TrainingError("need at least 2 classes")
    split = stratified_kfold(labels, k=folds, seed=seed)
    rows: list[tuple[float, float]] = []
    for c in grid:
        fold_acc: list[float] = []
        for fold in range(split.k):
            train_idx, test_idx = split.train_test(fold)
            model = train_svm([data[i] for i in train_idx], kernel, c)
            correct = sum(
                1
                for i in test_idx
                if predict_intent(model, np.asarray(data[i][0])).intent == data[i][1]
            )
            fold_acc.append(correct / len(test_idx))
        rows.append((float(c), 100.0 * float(np.mean(fold_acc))))
    best_c, best_acc = rows[0]
    for c, acc in rows[1:]:
        if acc > best_acc or (acc == best_acc and c < best_c):
            best_c, best_acc = c, acc
    return GridSearchResult(best_c=best_c, table=tuple(rows))


@dataclass(frozen=True)
class KernelSweepRow:
    kernel: str
    best_c: float
    accuracy: float  # percent


def kernel_sweep(
    data: list[tuple[np.ndarray, str]],
    kernels: tuple[KernelSpec, ...] | None = None,
    grid: tuple[float, ...] = DEFAULT_C_GRID,
    folds: int = 5,
    seed: int = 0,
) -> tuple[KernelSweepRow, ...]:
    """Grid-search C per kernel and report each kernel's best accuracy."""
    if kernels is None:
        kernels = tuple(KernelSpec(kind=kind) for kind in KERNEL_KINDS)
    rows = []
    for spec in kernels:
        result = grid_search_C(data, spec, grid=grid, folds=folds, seed=seed)
        accuracy = dict(result.table)[result.best_c]
        rows.append(KernelSweepRow(kernel=spec.kind, best_c=result.best_c, accuracy=accuracy))
    return tuple(rows)
