"""Linear-chain CRF over BILOU tags.

Training maximizes the L1/L2-regularized conditional log-likelihood with
proximal gradient steps (smooth gradient step, then soft-thresholding) and
a backtracking line search, so the objective never decreases across
accepted steps. All dynamic programming runs in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import EntitySpan
from .errors import TrainingError
from .textfeat import FeatureVector, O_TAG, Token, bilou_decode, crf_features

Compiled = list[tuple[np.ndarray, np.ndarray]]  # per position: (feature idx, values)


@dataclass(frozen=True)
class CrfHyper:
    l1: float = 0.1
    l2: float = 0.1
    max_iterations: int = 50
    initial_step: float = 0.1

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise TrainingError("regularization strengths must be non-negative")


@dataclass(frozen=True)
class TaggedSequence:
    features: tuple[FeatureVector, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.features) != len(self.tags) or not self.tags:
            raise TrainingError("sequence needs equal, non-zero feature/tag lengths")


@dataclass
class CrfModel:
    labels: tuple[str, ...]  # sorted, always includes O
    feature_ids: tuple[str, ...]
    emission: np.ndarray  # (F, L)
    transition: np.ndarray  # (L, L)
    hyper: CrfHyper
    objective_trace: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self._feature_index = {f: i for i, f in enumerate(self.feature_ids)}
        self._label_index = {l: i for i, l in enumerate(self.labels)}

    def label_index(self, label: str) -> int:
        return self._label_index[label]

    def compile(self, features: list[FeatureVector]) -> Compiled:
        """Map sparse feature dicts to (index, value) arrays; unknown
        features are dropped (zero weight)."""
        compiled = []
        for feats in features:
            known = [(self._feature_index[f], v) for f, v in feats.items()
                     if f in self._feature_index]
            idx = np.array([i for i, _ in known], dtype=np.intp)
            vals = np.array([v for _, v in known], dtype=np.float64)
            compiled.append((idx, vals))
        return compiled


def _logsumexp(x: np.ndarray, axis: int | None = None):
    if axis is None:
        m = float(np.max(x))
        return m + float(np.log(np.sum(np.exp(x - m))))
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)), axis=axis)


def _scores_for(emission: np.ndarray, n_labels: int, compiled: Compiled) -> np.ndarray:
    scores = np.zeros((len(compiled), n_labels))
    for t, (idx, vals) in enumerate(compiled):
        if len(idx):
            scores[t] = vals @ emission[idx]
    return scores


def _forward(scores: np.ndarray, transition: np.ndarray) -> float:
    alpha = scores[0]
    for t in range(1, len(scores)):
        alpha = scores[t] + _logsumexp(alpha[:, None] + transition, axis=0)
    return float(_logsumexp(alpha))


def _gold_score(scores: np.ndarray, transition: np.ndarray, gold: np.ndarray) -> float:
    total = float(scores[np.arange(len(gold)), gold].sum())
    total += float(transition[gold[:-1], gold[1:]].sum())
    return total


# --- Public operations --------------------------------------------------------


def log_partition(model: CrfModel, features: list[FeatureVector]) -> float:
    """log Z via the forward recursion in log space."""
    if not features:
        raise TrainingError("log_partition requires at least one token")
    scores = _scores_for(model.emission, len(model.labels), model.compile(features))
    return _forward(scores, model.transition)


def path_score(model: CrfModel, features: list[FeatureVector], tags: list[str]) -> float:
    scores = _scores_for(model.emission, len(model.labels), model.compile(features))
    gold = np.array([model.label_index(t) for t in tags], dtype=np.intp)
    return _gold_score(scores, model.transition, gold)


def viterbi(model: CrfModel, features: list[FeatureVector]) -> tuple[list[str], float]:
    """Maximum-score tag path; ties resolve to the path that is earliest in
    lexicographic label order (labels are stored sorted, and the DP runs
    backward so the forward reconstruction can prefer lower labels)."""
    if not features:
        raise TrainingError("viterbi requires at least one token")
    scores = _scores_for(model.emission, len(model.labels), model.compile(features))
    n, n_labels = scores.shape
    suffix = np.zeros((n, n_labels))
    choice = np.zeros((n, n_labels), dtype=np.intp)
    suffix[n - 1] = scores[n - 1]
    for t in range(n - 2, -1, -1):
        options = model.transition + suffix[t + 1][None, :]  # (from, to)
        choice[t] = np.argmax(options, axis=1)
        suffix[t] = scores[t] + options[np.arange(n_labels), choice[t]]
    first = int(np.argmax(suffix[0]))
    path = [first]
    for t in range(n - 1):
        path.append(int(choice[t][path[-1]]))
    return [model.labels[i] for i in path], float(suffix[0][first])


def marginals(model: CrfModel, features: list[FeatureVector]) -> np.ndarray:
    """Per-position label marginals (rows sum to 1)."""
    scores = _scores_for(model.emission, len(model.labels), model.compile(features))
    alpha, beta, log_z = _forward_backward(scores, model.transition)
    return np.exp(alpha + beta - log_z)


def _forward_backward(scores: np.ndarray, transition: np.ndarray):
    n, n_labels = scores.shape
    alpha = np.zeros((n, n_labels))
    beta = np.zeros((n, n_labels))
    alpha[0] = scores[0]
    for t in range(1, n):
        alpha[t] = scores[t] + _logsumexp(alpha[t - 1][:, None] + transition, axis=0)
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(transition + (scores[t + 1] + beta[t + 1])[None, :], axis=1)
    return alpha, beta, float(_logsumexp(alpha[-1]))


@dataclass
class CrfGradient:
    emission: np.ndarray
    transition: np.ndarray


def log_likelihood(model: CrfModel, batch: list[TaggedSequence]) -> float:
    """Unregularized sum of log p(tags | features) over the batch."""
    compiled = [model.compile(list(seq.features)) for seq in batch]
    gold = [np.array([model.label_index(t) for t in seq.tags], dtype=np.intp)
            for seq in batch]
    return _batch_loglik(model.emission, model.transition, len(model.labels), compiled, gold)


def _batch_loglik(emission, transition, n_labels, compiled_batch, gold_batch) -> float:
    total = 0.0
    for compiled, gold in zip(compiled_batch, gold_batch):
        scores = _scores_for(emission, n_labels, compiled)
        total += _gold_score(scores, transition, gold) - _forward(scores, transition)
    return total


def crf_gradient(model: CrfModel, batch: list[TaggedSequence]) -> CrfGradient:
    """Gradient of the unregularized log-likelihood: observed minus expected
    feature counts via forward-backward marginals. Sums over the batch."""
    compiled = [model.compile(list(seq.features)) for seq in batch]
    gold = [np.array([model.label_index(t) for t in seq.tags], dtype=np.intp)
            for seq in batch]
    g_e, g_t = _batch_gradient(
        model.emission, model.transition, len(model.labels), compiled, gold
    )
    return CrfGradient(emission=g_e, transition=g_t)


def _batch_gradient(emission, transition, n_labels, compiled_batch, gold_batch):
    g_emission = np.zeros_like(emission)
    g_transition = np.zeros_like(transition)
    for compiled, gold in zip(compiled_batch, gold_batch):
        scores = _scores_for(emission, n_labels, compiled)
        alpha, beta, log_z = _forward_backward(scores, transition)
        gamma = np.exp(alpha + beta - log_z)
        for t, (idx, vals) in enumerate(compiled):
            if len(idx) == 0:
                continue
            g_emission[idx, gold[t]] += vals
            g_emission[idx] -= vals[:, None] * gamma[t][None, :]
        for t in range(len(compiled) - 1):
            xi = np.exp(
                alpha[t][:, None]
                + transition
                + (scores[t + 1] + beta[t + 1])[None, :]
                - log_z
            )
            g_transition -= xi
        for t in range(len(gold) - 1):
            g_transition[gold[t], gold[t + 1]] += 1.0
    return g_emission, g_transition


def _penalty(emission, transition, hyper: CrfHyper) -> float:
    sq = float((emission * emission).sum() + (transition * transition).sum())
    ab = float(np.abs(emission).sum() + np.abs(transition).sum())
    return hyper.l2 * sq + hyper.l1 * ab


def _soft_threshold(values: np.ndarray, amount: float) -> np.ndarray:
    return np.sign(values) * np.maximum(np.abs(values) - amount, 0.0)


def train_crf(sequences: list[TaggedSequence], hyper: CrfHyper | None = None) -> CrfModel:
    """Fit by proximal gradient ascent with backtracking (halve the step
    until the regularized objective improves). Weights start at zero; the
    objective is convex, so the result is seed-free deterministic."""
    if not sequences:
        raise TrainingError("training set is empty")
    hyper = hyper or CrfHyper()

    label_set = {O_TAG}
    feature_order: dict[str, None] = {}
    for seq in sequences:
        label_set.update(seq.tags)
        for feats in seq.features:
            for name in feats:
                feature_order.setdefault(name, None)
    labels = tuple(sorted(label_set))
    feature_ids = tuple(feature_order)
    n_labels = len(labels)
    feature_index = {f: i for i, f in enumerate(feature_ids)}
    label_index = {l: i for i, l in enumerate(labels)}

    compiled_batch: list[Compiled] = []
    gold_batch: list[np.ndarray] = []
    for seq in sequences:
        compiled: Compiled = []
        for feats in seq.features:
            idx = np.array([feature_index[f] for f in feats], dtype=np.intp)
            vals = np.array(list(feats.values()), dtype=np.float64)
            compiled.append((idx, vals))
        compiled_batch.append(compiled)
        gold_batch.append(np.array([label_index[t] for t in seq.tags], dtype=np.intp))

    emission = np.zeros((len(feature_ids), n_labels))
    transition = np.zeros((n_labels, n_labels))

    def objective(e, t):
        return _batch_loglik(e, t, n_labels, compiled_batch, gold_batch) - _penalty(e, t, hyper)

    trace = [objective(emission, transition)]
    step = hyper.initial_step
    for _ in range(hyper.max_iterations):
        g_e, g_t = _batch_gradient(emission, transition, n_labels, compiled_batch, gold_batch)
        smooth_e = g_e - 2.0 * hyper.l2 * emission
        smooth_t = g_t - 2.0 * hyper.l2 * transition
        accepted = False
        while step > 1e-15:
            cand_e = _soft_threshold(emission + step * smooth_e, step * hyper.l1)
            cand_t = _soft_threshold(transition + step * smooth_t, step * hyper.l1)
            value = objective(cand_e, cand_t)
            if value > trace[-1]:
                emission, transition = cand_e, cand_t
                trace.append(value)
                step = min(step * 1.5, 10.0)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break

    return CrfModel(
        labels=labels,
        feature_ids=feature_ids,
        emission=emission,
        transition=transition,
        hyper=hyper,
        objective_trace=tuple(trace),
    )


def extract_entities(
    model: CrfModel, tokens: list[Token], text: str | None = None
) -> list[EntitySpan]:
    """Viterbi-decode tokens into entity spans."""
    if not tokens:
        return []
    features = [crf_features(tokens, i) for i in range(len(tokens))]
    tags, _ = viterbi(model, features)
    return bilou_decode(tags, tokens, text)
