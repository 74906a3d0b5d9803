import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chatctl.crf import CrfHyper, TaggedSequence
from chatctl.errors import ValidationError
from chatctl.evaluate import (
    ConfusionMatrix,
    EvalReport,
    FoldSplit,
    confidence_histogram,
    emit_report,
    eval_entities,
    eval_intents,
    eval_stories,
    stratified_kfold,
)
from chatctl.corpus import parse_stories
from chatctl.knn import KSweepReport, KSweepRow
from chatctl.svm import KernelSpec, KernelSweepRow
from chatctl.textfeat import bilou_runs


class TestStratifiedKfold:
    def test_balanced_two_class_deal(self):
        labels = ["a"] * 10 + ["b"] * 10
        split = stratified_kfold(labels, k=10, seed=0)
        for fold in split.folds:
            assert len(fold) == 2
            assert {labels[i] for i in fold} == {"a", "b"}

    def test_single_fold_holds_everything(self):
        labels = ["a", "b", "a"]
        split = stratified_kfold(labels, k=1, seed=0)
        assert split.folds == ((0, 1, 2),)

    def test_paper_shaped_split_is_within_one(self):
        rng = np.random.default_rng(0)
        labels = [f"i{rng.integers(19):02d}" for _ in range(441)]
        # ensure every class has at least 10 members
        counts = {label: labels.count(label) for label in set(labels)}
        for label, count in counts.items():
            labels.extend([label] * max(0, 10 - count))
        split = stratified_kfold(labels, k=10, seed=1)
        for label in set(labels):
            total = labels.count(label)
            per_fold = [sum(1 for i in fold if labels[i] == label) for fold in split.folds]
            assert max(per_fold) - min(per_fold) <= 1
            assert abs(max(per_fold) - total / 10) <= 1

    def test_small_class_rejected_with_suggestion(self):
        with pytest.raises(ValidationError, match="reduce k"):
            stratified_kfold(["a"] * 3 + ["b"] * 20, k=10)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(
            st.sampled_from(["x", "y", "z"]), min_size=9, max_size=60
        ).filter(lambda ls: all(ls.count(c) >= 3 for c in set(ls)))
    )
    def test_partition_properties(self, labels):
        split = stratified_kfold(labels, k=3, seed=7)
        flat = [i for fold in split.folds for i in fold]
        assert sorted(flat) == list(range(len(labels)))
        for label in set(labels):
            per_fold = [sum(1 for i in fold if labels[i] == label) for fold in split.folds]
            assert max(per_fold) - min(per_fold) <= 1

    def test_seeded_determinism(self):
        labels = ["a"] * 12 + ["b"] * 15
        assert stratified_kfold(labels, 3, seed=5) == stratified_kfold(labels, 3, seed=5)
        assert stratified_kfold(labels, 3, seed=5) != stratified_kfold(labels, 3, seed=6)


class TestConfusionMatrix:
    def test_accuracy_is_trace_over_total(self):
        matrix = ConfusionMatrix.from_pairs(
            ["a", "b"], [("a", "a"), ("a", "b"), ("b", "b"), ("b", "b")]
        )
        assert matrix.trace == 3
        assert matrix.total == 4
        assert matrix.accuracy() == 75.0

    def test_row_sums_equal_support(self):
        pairs = [("a", "b")] * 3 + [("b", "a")] * 2 + [("a", "a")]
        matrix = ConfusionMatrix.from_pairs(["a", "b"], pairs)
        assert sum(matrix.counts[0]) == 4
        assert sum(matrix.counts[1]) == 2


class TestEvalIntents:
    def test_separable_data_scores_perfectly(self):
        data = []
        for i in range(10):
            data.append((np.array([float(i), 0.0]), "lo"))
            data.append((np.array([float(i) + 100.0, 0.0]), "hi"))
        labels = [label for _, label in data]
        split = stratified_kfold(labels, k=5, seed=0)
        result = eval_intents(data, KernelSpec("linear"), 1.0, split)
        assert result.accuracy == 100.0
        assert result.matrix.counts[0][1] == 0
        assert result.matrix.counts[1][0] == 0
        assert result.accuracy == result.matrix.accuracy()
        assert len(result.confidence_records) == len(data)


class TestEvalEntities:
    def _sequence(self, tags):
        features = tuple({f"pos{i}": 1.0, "shared": 1.0} for i in range(len(tags)))
        return TaggedSequence(features=features, tags=tuple(tags))

    def test_memorized_duplicate_sequences(self):
        seq = self._sequence(["B-dn", "L-dn", "O"])
        split = FoldSplit(folds=((0,), (1,)))
        result = eval_entities([seq, seq], CrfHyper(l1=0.0, l2=0.01, max_iterations=40), split)
        assert result.token_accuracy == 100.0
        assert result.f1 == 100.0

    def test_all_outside_training_gives_zero_recall(self):
        plain = self._sequence(["O", "O", "O"])
        entity = self._sequence(["B-dn", "L-dn", "O"])
        split = FoldSplit(folds=((0,), (1,)))
        result = eval_entities([plain, entity], CrfHyper(max_iterations=10), split)
        assert result.recall == 0.0

    def test_token_and_entity_metrics_are_not_ordered(self):
        # token accuracy can land on either side of entity F1
        gold_a = ["U-a", "O"]
        pred_a = ["U-a", "U-b"]  # 50% tokens, F1 66.7
        tp = len(set(bilou_runs(gold_a)) & set(bilou_runs(pred_a)))
        precision = tp / len(bilou_runs(pred_a))
        recall = tp / len(bilou_runs(gold_a))
        f1_a = 200 * precision * recall / (precision + recall)
        assert f1_a > 50.0

        gold_b = ["B-a", "L-a"]
        pred_b = ["B-a", "O"]  # 50% tokens, F1 0
        assert set(bilou_runs(gold_b)) & set(bilou_runs(pred_b)) == set()


class TestEvalStories:
    def test_six_of_eight_is_seventy_five(self, engine, artifacts):
        stories = list(artifacts.stories[:6])
        broken = parse_stories(
            "## broken_one\n* xinChao\n  - utter_bye\n"
            "## broken_two\n* camOn\n  - utter_xinChao\n"
        )
        result = eval_stories(engine, stories + broken)
        assert result.stories_total == 8
        assert result.story_accuracy == 75.0
        assert result.matrix.accuracy() == result.action_accuracy

    def test_all_training_stories_pass(self, engine, artifacts):
        result = eval_stories(engine, list(artifacts.stories))
        assert result.story_accuracy == 100.0
        assert result.action_accuracy == 100.0

    def test_zero_stories_marked_empty(self, engine):
        result = eval_stories(engine, [])
        assert result.empty
        assert result.story_accuracy is None


class TestReports:
    def _report(self):
        report = EvalReport()
        report.set_kernels(
            (
                KernelSweepRow("linear", 1.0, 93.65),
                KernelSweepRow("poly", 1.0, 85.0),
                KernelSweepRow("sigmoid", 2.0, 92.3),
                KernelSweepRow("rbf", 2.0, 94.33),
            )
        )
        report.set_ksweep(
            KSweepReport(
                rows=tuple(KSweepRow(k, 97.0 + k / 100.0) for k in (11, 13, 15, 17, 19)),
                best_k=17,
            )
        )
        return report

    def test_kernel_table_has_four_rows(self):
        text = emit_report(self._report(), "csv")
        kernel_rows = [line for line in text.splitlines() if line.startswith("kernels,")]
        assert len(kernel_rows) == 4

    def test_ksweep_has_five_rows(self):
        text = emit_report(self._report(), "csv")
        rows = [line for line in text.splitlines() if line.startswith("ksweep,k=")]
        assert len(rows) == 5

    def test_json_round_trip(self):
        report = self._report()
        parsed = EvalReport.from_json(emit_report(report, "json"))
        assert parsed.to_dict() == report.to_dict()
        assert emit_report(parsed, "json") == emit_report(report, "json")

    def test_emission_is_deterministic(self):
        assert emit_report(self._report(), "text") == emit_report(self._report(), "text")

    def test_unknown_format_rejected(self):
        with pytest.raises(ValidationError):
            emit_report(self._report(), "yaml")


class TestConfidenceHistogram:
    def test_twenty_bins_of_width_005(self):
        histogram = confidence_histogram([(0.999, True), (0.0, False), (0.51, True)])
        assert len(histogram["correct"]) == 20
        assert histogram["bin_width"] == 0.05
        assert histogram["correct"][19] == 1
        assert histogram["incorrect"][0] == 1
        assert histogram["correct"][10] == 1

    def test_counts_preserved(self):
        records = [(i / 100.0, i % 2 == 0) for i in range(100)]
        histogram = confidence_histogram(records)
        assert sum(histogram["correct"]) + sum(histogram["incorrect"]) == 100
