import itertools
import math

import numpy as np
import pytest

from chatctl.corpus import parse_nlu
from chatctl.crf import (
    CrfHyper,
    CrfModel,
    TaggedSequence,
    crf_gradient,
    extract_entities,
    log_likelihood,
    log_partition,
    marginals,
    path_score,
    train_crf,
    viterbi,
)
from chatctl.errors import TrainingError
from chatctl.pipeline import entity_sequences
from chatctl.textfeat import tokenize


# --- independent oracles ------------------------------------------------------


def oracle_emissions(model: CrfModel, features) -> np.ndarray:
    """Recompute emission scores straight from the weight table."""
    scores = np.zeros((len(features), len(model.labels)))
    for t, feats in enumerate(features):
        for name, value in feats.items():
            if name in model.feature_ids:
                row = model.feature_ids.index(name)
                for col in range(len(model.labels)):
                    scores[t, col] += value * model.emission[row, col]
    return scores


def oracle_paths(model: CrfModel, features):
    """Enumerate every tag path: returns (log Z, best tags, best score)."""
    scores = oracle_emissions(model, features)
    n_labels = len(model.labels)
    steps = len(features)
    totals = []
    best_score = -math.inf
    best_path = None
    for path in itertools.product(range(n_labels), repeat=steps):
        total = sum(scores[t, l] for t, l in enumerate(path))
        total += sum(model.transition[a, b] for a, b in zip(path, path[1:]))
        totals.append(total)
        labels = tuple(model.labels[l] for l in path)
        if total > best_score or (total == best_score and labels < best_path):
            best_score = total
            best_path = labels
    log_z = float(np.logaddexp.reduce(totals))
    return log_z, list(best_path), best_score


def random_model(n_features=5, n_labels=3, seed=0, scale=1.0) -> CrfModel:
    rng = np.random.default_rng(seed)
    labels = tuple(sorted(f"l{i}" for i in range(n_labels)))
    feature_ids = tuple(f"f{i}" for i in range(n_features))
    return CrfModel(
        labels=labels,
        feature_ids=feature_ids,
        emission=scale * rng.normal(size=(n_features, n_labels)),
        transition=scale * rng.normal(size=(n_labels, n_labels)),
        hyper=CrfHyper(),
    )


def random_features(n_features=5, length=4, seed=0):
    rng = np.random.default_rng(seed)
    features = []
    for _ in range(length):
        active = rng.choice(n_features, size=rng.integers(1, n_features), replace=False)
        features.append({f"f{i}": float(rng.normal()) for i in active})
    return features


class TestLogPartition:
    def test_uniform_two_way(self):
        model = CrfModel(
            labels=("a", "b"),
            feature_ids=("f0",),
            emission=np.zeros((1, 2)),
            transition=np.zeros((2, 2)),
            hyper=CrfHyper(),
        )
        assert log_partition(model, [{"f0": 1.0}]) == pytest.approx(math.log(2))

    def test_matches_brute_force(self):
        model = random_model(n_labels=3, seed=42)
        features = random_features(length=4, seed=43)
        expected, _, _ = oracle_paths(model, features)
        assert log_partition(model, features) == pytest.approx(expected, abs=1e-8)

    def test_zero_weights_give_t_log_l(self):
        model = CrfModel(
            labels=("a", "b", "c"),
            feature_ids=("f0",),
            emission=np.zeros((1, 3)),
            transition=np.zeros((3, 3)),
            hyper=CrfHyper(),
        )
        features = [{"f0": 1.0}] * 5
        assert log_partition(model, features) == pytest.approx(5 * math.log(3))

    def test_empty_rejected(self):
        with pytest.raises(TrainingError):
            log_partition(random_model(), [])


class TestViterbi:
    def test_dominant_emissions(self):
        model = CrfModel(
            labels=("a", "b"),
            feature_ids=("f0", "f1"),
            emission=np.array([[5.0, -5.0], [-5.0, 5.0]]),
            transition=np.zeros((2, 2)),
            hyper=CrfHyper(),
        )
        tags, _ = viterbi(model, [{"f0": 1.0}, {"f1": 1.0}, {"f0": 1.0}])
        assert tags == ["a", "b", "a"]

    def test_matches_brute_force(self):
        for seed in range(10):
            model = random_model(n_labels=4, seed=seed)
            features = random_features(length=5, seed=100 + seed)
            _, expected_tags, expected_score = oracle_paths(model, features)
            tags, score = viterbi(model, features)
            assert tags == expected_tags
            assert score == pytest.approx(expected_score, abs=1e-9)

    def test_global_tie_prefers_lexicographic_order(self):
        # all-zero weights make every path tie; the decoder must pick the
        # label sequence that is smallest in lexicographic order
        model = CrfModel(
            labels=("a", "b", "c"),
            feature_ids=("f0",),
            emission=np.zeros((1, 3)),
            transition=np.zeros((3, 3)),
            hyper=CrfHyper(),
        )
        tags, score = viterbi(model, [{"f0": 1.0}] * 3)
        assert tags == ["a", "a", "a"]
        assert score == 0.0

    def test_constructed_tie_validated_by_oracle(self):
        model = CrfModel(
            labels=("a", "b"),
            feature_ids=("f0",),
            emission=np.array([[1.0, 1.0]]),  # both labels score equally
            transition=np.zeros((2, 2)),
            hyper=CrfHyper(),
        )
        features = [{"f0": 1.0}, {"f0": 1.0}]
        _, expected_tags, _ = oracle_paths(model, features)
        tags, _ = viterbi(model, features)
        assert tags == expected_tags == ["a", "a"]


class TestGradient:
    def test_matches_finite_differences(self):
        step = 1e-5
        for seed in range(3):
            model = random_model(n_features=4, n_labels=3, seed=seed, scale=0.5)
            batch = [
                TaggedSequence(
                    features=tuple(random_features(n_features=4, length=4, seed=50 + seed)),
                    tags=("l0", "l2", "l1", "l0"),
                )
            ]
            grad = crf_gradient(model, batch)
            for array, g_array in ((model.emission, grad.emission), (model.transition, grad.transition)):
                flat = array.ravel()
                g_flat = g_array.ravel()
                for i in range(flat.size):
                    original = flat[i]
                    flat[i] = original + step
                    plus = log_likelihood(model, batch)
                    flat[i] = original - step
                    minus = log_likelihood(model, batch)
                    flat[i] = original
                    numeric = (plus - minus) / (2 * step)
                    denom = max(abs(numeric), abs(g_flat[i]), 1e-6)
                    assert abs(numeric - g_flat[i]) / denom < 1e-4

    def test_zero_gradient_at_symmetric_optimum(self):
        # two observations with identical features and opposite labels put
        # the unregularized optimum exactly at zero weights
        model = CrfModel(
            labels=("a", "b"),
            feature_ids=("f0",),
            emission=np.zeros((1, 2)),
            transition=np.zeros((2, 2)),
            hyper=CrfHyper(),
        )
        batch = [
            TaggedSequence(features=({"f0": 1.0},), tags=("a",)),
            TaggedSequence(features=({"f0": 1.0},), tags=("b",)),
        ]
        grad = crf_gradient(model, batch)
        assert np.linalg.norm(grad.emission) < 1e-6
        assert np.linalg.norm(grad.transition) < 1e-6

    def test_duplicated_sequence_doubles_gradient(self):
        model = random_model(seed=7)
        seq = TaggedSequence(
            features=tuple(random_features(length=3, seed=8)), tags=("l0", "l1", "l2")
        )
        single = crf_gradient(model, [seq])
        double = crf_gradient(model, [seq, seq])
        assert np.allclose(double.emission, 2 * single.emission)
        assert np.allclose(double.transition, 2 * single.transition)


class TestMarginals:
    def test_positions_sum_to_one(self):
        model = random_model(n_labels=4, seed=3)
        features = random_features(length=6, seed=4)
        gamma = marginals(model, features)
        assert np.allclose(gamma.sum(axis=1), 1.0, atol=1e-9)

    def test_path_probabilities_sum_to_one(self):
        model = random_model(n_labels=3, seed=5)
        features = random_features(length=4, seed=6)
        log_z, _, _ = oracle_paths(model, features)
        total = 0.0
        scores = oracle_emissions(model, features)
        for path in itertools.product(range(3), repeat=4):
            s = sum(scores[t, l] for t, l in enumerate(path))
            s += sum(model.transition[a, b] for a, b in zip(path, path[1:]))
            log_p = s - log_z
            assert log_p <= 1e-12
            total += math.exp(log_p)
        assert total == pytest.approx(1.0, abs=1e-8)


class TestTrainCrf:
    def test_single_observation_memorized(self):
        seq = TaggedSequence(features=({"f0": 1.0},), tags=("yes",))
        model = train_crf([seq], CrfHyper(l1=0.0, l2=0.001, max_iterations=80))
        gamma = marginals(model, [{"f0": 1.0}])
        observed = gamma[0][model.label_index("yes")]
        assert observed > 0.99

    def test_default_hyperparameters_recorded(self):
        seq = TaggedSequence(features=({"f0": 1.0},), tags=("yes",))
        model = train_crf([seq])
        assert model.hyper.l1 == 0.1
        assert model.hyper.l2 == 0.1
        assert model.hyper.max_iterations == 50

    def test_objective_never_decreases(self):
        rng = np.random.default_rng(12)
        sequences = []
        for _ in range(6):
            length = int(rng.integers(1, 5))
            features = tuple(
                {f"f{int(rng.integers(4))}": float(rng.normal())} for _ in range(length)
            )
            tags = tuple(str(rng.choice(["x", "y", "O"])) for _ in range(length))
            sequences.append(TaggedSequence(features=features, tags=tags))
        model = train_crf(sequences, CrfHyper(max_iterations=30))
        trace = model.objective_trace
        assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))

    def test_viterbi_beats_gold_path_score(self):
        sequences = entity_sequences(
            parse_nlu("## intent:q\n- [học phần](dn) là gì\n- xin chào bạn\n")
        )
        model = train_crf(sequences, CrfHyper(max_iterations=15))
        for seq in sequences:
            _, best = viterbi(model, list(seq.features))
            gold = path_score(model, list(seq.features), list(seq.tags))
            assert best >= gold - 1e-12

    def test_l1_monotone_sparsity(self):
        sequences = entity_sequences(
            parse_nlu(
                "## intent:q\n- [học phần](dn) là gì\n- [tín chỉ](dn) là gì vậy\n- xin chào\n"
            )
        )
        sizes = []
        for l1 in (0.0, 0.1, 1.0):
            model = train_crf(sequences, CrfHyper(l1=l1, l2=0.1, max_iterations=25))
            nonzero = int(np.count_nonzero(model.emission)) + int(
                np.count_nonzero(model.transition)
            )
            sizes.append(nonzero)
        assert sizes[0] >= sizes[1] >= sizes[2]

    def test_empty_training_set_rejected(self):
        with pytest.raises(TrainingError):
            train_crf([])


class TestExtractEntities:
    def test_trained_model_tags_prerequisite_phrase(self):
        source = """## intent:dinhNghia
- tôi muốn biết [chương trình đào tạo](dn) là gì
- [kế hoạch học tập](dn) là như thế nào
- [học phần](dn) là cái gì
- [học phần tiên quyết](dn) là sao
- cho tôi biết [học phần bắt buộc](dn) là gì
- [lớp chuyên ngành](dn) là gì
"""
        model = train_crf(entity_sequences(parse_nlu(source)))
        text = "học phần tiên quyết là gì"
        spans = extract_entities(model, tokenize(text), text)
        assert [(s.value, s.entity_name) for s in spans] == [("học phần tiên quyết", "dn")]

    def test_empty_tokens(self):
        model = random_model()
        assert extract_entities(model, []) == []

    def test_all_outside_decode(self):
        model = CrfModel(
            labels=("O", "U-dn"),
            feature_ids=("f0",),
            emission=np.array([[5.0, -5.0]]),
            transition=np.zeros((2, 2)),
            hyper=CrfHyper(),
        )
        tokens = tokenize("xin chào")
        assert extract_entities(model, tokens) == []
