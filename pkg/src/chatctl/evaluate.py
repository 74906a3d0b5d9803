"""Evaluation harness: stratified cross-validation of the intent and entity
models, kernel and k sweeps, confidence histograms, story replay scoring,
and deterministic report serialization (text/json/csv)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import Story
from .crf import CrfHyper, TaggedSequence, train_crf, viterbi
from .errors import ValidationError
from .knn import KSweepReport
from .splits import FoldSplit, stratified_kfold  # re-exported: canonical home
from .svm import KernelSpec, KernelSweepRow, predict_intent, train_svm
from .textfeat import bilou_runs

__all__ = [
    "FoldSplit",
    "stratified_kfold",
    "ConfusionMatrix",
    "IntentEvalResult",
    "EntityEvalResult",
    "StoriesEvalResult",
    "EvalReport",
    "eval_intents",
    "eval_entities",
    "eval_stories",
    "confidence_histogram",
    "emit_report",
]

HISTOGRAM_BINS = 20  # width 0.05 over [0, 1]


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]  # counts[i][j]: true i predicted j

    @classmethod
    def from_pairs(cls, labels, pairs) -> "ConfusionMatrix":
        index = {label: i for i, label in enumerate(labels)}
        grid = [[0] * len(labels) for _ in labels]
        for true, predicted in pairs:
            grid[index[true]][index[predicted]] += 1
        return cls(labels=tuple(labels), counts=tuple(tuple(row) for row in grid))

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    @property
    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.labels)))

    def accuracy(self) -> float:
        """Percent; exactly trace/total."""
        return 100.0 * self.trace / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": [list(r) for r in self.counts]}


def confidence_histogram(records: list[tuple[float, bool]]) -> dict:
    """Counts of correct/incorrect predictions in 20 bins of width 0.05."""
    correct = [0] * HISTOGRAM_BINS
    incorrect = [0] * HISTOGRAM_BINS
    for confidence, ok in records:
        bin_i = min(int(confidence * HISTOGRAM_BINS), HISTOGRAM_BINS - 1)
        (correct if ok else incorrect)[bin_i] += 1
    return {"bin_width": 1.0 / HISTOGRAM_BINS, "correct": correct, "incorrect": incorrect}


@dataclass(frozen=True)
class IntentEvalResult:
    accuracy: float  # percent
    matrix: ConfusionMatrix
    confidence_records: tuple[tuple[float, bool], ...]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion_matrix": self.matrix.to_dict(),
            "histogram": confidence_histogram(list(self.confidence_records)),
        }


def eval_intents(
    data: list[tuple[np.ndarray, str]],
    kernel: KernelSpec,
    c: float,
    split: FoldSplit,
) -> IntentEvalResult:
    """Cross-validated intent accuracy with a confusion matrix and per
    prediction (confidence, correct?) records."""
    labels = sorted({label for _, label in data})
    pairs: list[tuple[str, str]] = []
    records: list[tuple[float, bool]] = []
    for fold in range(split.k):
        train_idx, test_idx = split.train_test(fold)
        model = train_svm([data[i] for i in train_idx], kernel, c)
        for i in test_idx:
            prediction = predict_intent(model, np.asarray(data[i][0]))
            pairs.append((data[i][1], prediction.intent))
            records.append((prediction.confidence, prediction.intent == data[i][1]))
    matrix = ConfusionMatrix.from_pairs(labels, pairs)
    return IntentEvalResult(
        accuracy=matrix.accuracy(), matrix=matrix, confidence_records=tuple(records)
    )


@dataclass(frozen=True)
class EntityEvalResult:
    token_accuracy: float  # percent
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {
            "token_accuracy": self.token_accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def eval_entities(
    sequences: list[TaggedSequence], hyper: CrfHyper, split: FoldSplit
) -> EntityEvalResult:
    """Cross-validated CRF scoring. Token accuracy counts per-tag matches;
    entity-level precision/recall/F1 require exact (span, name) matches."""
    token_correct = 0
    token_total = 0
    true_positive = 0
    predicted_total = 0
    gold_total = 0
    for fold in range(split.k):
        train_idx, test_idx = split.train_test(fold)
        model = train_crf([sequences[i] for i in train_idx], hyper)
        for i in test_idx:
            seq = sequences[i]
            predicted, _ = viterbi(model, list(seq.features))
            token_total += len(seq.tags)
            token_correct += sum(1 for a, b in zip(predicted, seq.tags) if a == b)
            gold_runs = set(bilou_runs(list(seq.tags)))
            pred_runs = set(bilou_runs(predicted))
            true_positive += len(gold_runs & pred_runs)
            predicted_total += len(pred_runs)
            gold_total += len(gold_runs)
    precision = 100.0 * true_positive / predicted_total if predicted_total else 0.0
    recall = 100.0 * true_positive / gold_total if gold_total else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return EntityEvalResult(
        token_accuracy=100.0 * token_correct / token_total if token_total else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
    )


@dataclass(frozen=True)
class StoriesEvalResult:
    empty: bool
    story_accuracy: float | None
    action_accuracy: float | None
    matrix: ConfusionMatrix | None
    stories_total: int = 0
    actions_total: int = 0

    def to_dict(self) -> dict:
        if self.empty:
            return {"empty": True}
        return {
            "empty": False,
            "story_accuracy": self.story_accuracy,
            "action_accuracy": self.action_accuracy,
            "stories_total": self.stories_total,
            "actions_total": self.actions_total,
            "confusion_matrix": self.matrix.to_dict(),
        }


def eval_stories(engine, stories: list[Story]) -> StoriesEvalResult:
    """Replay each story; a story passes iff every action matches."""
    if not stories:
        return StoriesEvalResult(
            empty=True, story_accuracy=None, action_accuracy=None, matrix=None
        )
    replays = [engine.replay_story(story) for story in stories]
    pairs = [pair for replay in replays for pair in replay.comparisons]
    labels = sorted({name for pair in pairs for name in pair})
    matrix = ConfusionMatrix.from_pairs(labels, pairs)
    passed = sum(1 for replay in replays if replay.passed)
    matched = sum(1 for expected, predicted in pairs if expected == predicted)
    return StoriesEvalResult(
        empty=False,
        story_accuracy=100.0 * passed / len(replays),
        action_accuracy=100.0 * matched / len(pairs) if pairs else 0.0,
        matrix=matrix,
        stories_total=len(replays),
        actions_total=len(pairs),
    )


SECTIONS = ("intents", "kernels", "confidences", "entities", "stories", "ksweep")


@dataclass
class EvalReport:
    """Assembled report; sections hold plain JSON-serializable dicts."""

    sections: dict = field(default_factory=dict)

    def set_intents(self, result: IntentEvalResult):
        payload = result.to_dict()
        self.sections["intents"] = {
            "accuracy": payload["accuracy"],
            "confusion_matrix": payload["confusion_matrix"],
        }
        self.sections["confidences"] = payload["histogram"]

    def set_kernels(self, rows: tuple[KernelSweepRow, ...]):
        self.sections["kernels"] = [
            {"kernel": row.kernel, "best_c": row.best_c, "accuracy": row.accuracy}
            for row in rows
        ]

    def set_entities(self, result: EntityEvalResult):
        self.sections["entities"] = result.to_dict()

    def set_stories(self, result: StoriesEvalResult):
        self.sections["stories"] = result.to_dict()

    def set_ksweep(self, report: KSweepReport):
        self.sections["ksweep"] = {
            "rows": [{"k": row.k, "accuracy": row.accuracy} for row in report.rows],
            "best_k": report.best_k,
        }

    def to_dict(self) -> dict:
        return self.sections

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(sections=json.loads(text))


def _format_matrix(matrix: dict) -> list[str]:
    labels = matrix["labels"]
    width = max((len(l) for l in labels), default=1)
    width = max(width, 5)
    lines = [" " * (width + 1) + " ".join(f"{l:>{width}}" for l in labels)]
    for label, row in zip(labels, matrix["counts"]):
        lines.append(f"{label:>{width}} " + " ".join(f"{c:>{width}}" for c in row))
    return lines


def emit_report(report: EvalReport, fmt: str = "text") -> str:
    """Deterministic serialization of the report in text, json, or csv."""
    sections = report.sections
    if fmt == "json":
        return json.dumps(sections, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        lines = ["section,key,value"]
        for name in SECTIONS:
            if name not in sections:
                continue
            payload = sections[name]
            if name == "kernels":
                for row in payload:
                    lines.append(f"kernels,{row['kernel']},{row['accuracy']:.2f}")
            elif name == "ksweep":
                for row in payload["rows"]:
                    lines.append(f"ksweep,k={row['k']},{row['accuracy']:.2f}")
                lines.append(f"ksweep,best_k,{payload['best_k']}")
            elif name == "intents":
                lines.append(f"intents,accuracy,{payload['accuracy']:.2f}")
            elif name == "entities":
                for key in ("token_accuracy", "precision", "recall", "f1"):
                    lines.append(f"entities,{key},{payload[key]:.2f}")
            elif name == "stories":
                if payload.get("empty"):
                    lines.append("stories,empty,true")
                else:
                    lines.append(f"stories,story_accuracy,{payload['story_accuracy']:.2f}")
                    lines.append(f"stories,action_accuracy,{payload['action_accuracy']:.2f}")
            elif name == "confidences":
                for i, (good, bad) in enumerate(
                    zip(payload["correct"], payload["incorrect"])
                ):
                    low = i * payload["bin_width"]
                    lines.append(f"confidences,[{low:.2f}],{good}/{bad}")
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise ValidationError(f"unknown report format {fmt!r}")

    lines: list[str] = ["evaluation report", "================="]
    if "intents" in sections:
        payload = sections["intents"]
        lines += ["", f"intent accuracy: {payload['accuracy']:.2f}%", "intent confusion matrix:"]
        lines += _format_matrix(payload["confusion_matrix"])
    if "kernels" in sections:
        lines += ["", "kernel accuracies:"]
        for row in sections["kernels"]:
            lines.append(
                f"  {row['kernel']:<8} accuracy {row['accuracy']:6.2f}%  (C={row['best_c']:g})"
            )
    if "confidences" in sections:
        payload = sections["confidences"]
        lines += ["", "confidence histogram (correct/incorrect per bin):"]
        for i, (good, bad) in enumerate(zip(payload["correct"], payload["incorrect"])):
            if good or bad:
                low = i * payload["bin_width"]
                high = low + payload["bin_width"]
                lines.append(f"  [{low:.2f}, {high:.2f}): {good}/{bad}")
    if "entities" in sections:
        payload = sections["entities"]
        lines += [
            "",
            f"entity token accuracy: {payload['token_accuracy']:.2f}%",
            f"entity precision/recall/F1: {payload['precision']:.2f}/"
            f"{payload['recall']:.2f}/{payload['f1']:.2f}",
        ]
    if "stories" in sections:
        payload = sections["stories"]
        lines.append("")
        if payload.get("empty"):
            lines.append("stories: no test stories (empty report)")
        else:
            lines += [
                f"story accuracy: {payload['story_accuracy']:.2f}% "
                f"({payload['stories_total']} stories)",
                f"action accuracy: {payload['action_accuracy']:.2f}% "
                f"({payload['actions_total']} actions)",
                "action confusion matrix:",
            ]
            lines += _format_matrix(payload["confusion_matrix"])
    if "ksweep" in sections:
        payload = sections["ksweep"]
        lines += ["", "kNN k sweep:"]
        for row in payload["rows"]:
            marker = "  <-- best" if row["k"] == payload["best_k"] else ""
            lines.append(f"  k={row['k']:<3} accuracy {row['accuracy']:6.2f}%{marker}")
    return "\n".join(lines) + "\n"
