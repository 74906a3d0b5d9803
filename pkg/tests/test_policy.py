import numpy as np
import pytest

from chatctl.corpus import parse_nlu, parse_stories, parse_templates, build_domain
from chatctl.errors import EngineError, TrainingError
from chatctl.policy import (
    PolicyModel,
    _init_params,
    featurize_tracker,
    loss_and_gradients,
    pad_window,
    policy_gradient_check,
    predict_action,
    stories_to_sequences,
    train_policy,
)
from chatctl.tracker import ActionExecuted, ConversationTracker, SlotSet, UserMessage

NLU = """## intent:xinChao
- xin chào
## intent:Anna_info
- bạn là ai
## intent:dinhNghia
- [học phần](dn) là cái gì
## intent:finish
- xong
## intent:tamBiet
- tạm biệt
"""

TEMPLATES = """templates:
  utter_xinChao:
    - text: chào!
  utter_AnnaInfo:
    - text: mình là bot
  utter_continue:
    - text: gì nữa không?
  utter_finish:
    - text: ok
  utter_bye:
    - text: bye
"""

STORY = """## story_AnnInfo_dn
* xinChao
  - utter_xinChao
* Anna_info
  - utter_AnnaInfo
  - utter_continue
* dinhNghia{"dn": "học phần"}
  - action_dn
  - reset_slots
  - utter_continue
* finish
  - utter_finish
* tamBiet
  - utter_bye
  - action_restart
"""


@pytest.fixture(scope="module")
def toy_domain():
    return build_domain(
        parse_nlu(NLU), parse_templates(TEMPLATES), parse_stories(STORY), ("action_dn",)
    )


@pytest.fixture(scope="module")
def toy_story():
    return parse_stories(STORY)[0]


class TestFeaturize:
    def test_fresh_tracker_all_zeros(self, toy_domain):
        tracker = ConversationTracker("t", toy_domain.slot_names)
        assert not featurize_tracker(tracker, toy_domain).any()

    def test_one_bit_after_user_turn(self, toy_domain):
        tracker = ConversationTracker("t", toy_domain.slot_names)
        tracker.apply(UserMessage(text="xin chào", intent="xinChao", confidence=1.0))
        state = featurize_tracker(tracker, toy_domain)
        assert state.sum() == 1.0
        assert state[toy_domain.intents.index("xinChao")] == 1.0

    def test_two_bits_after_first_action(self, toy_domain):
        tracker = ConversationTracker("t", toy_domain.slot_names)
        tracker.apply(UserMessage(text="xin chào", intent="xinChao", confidence=1.0))
        tracker.apply(ActionExecuted("utter_xinChao"))
        state = featurize_tracker(tracker, toy_domain)
        assert state.sum() == 2.0
        offset = len(toy_domain.intents) + len(toy_domain.entity_names) + len(
            toy_domain.slot_names
        )
        assert state[offset + toy_domain.actions.index("utter_xinChao")] == 1.0

    def test_entity_and_slot_bits(self, toy_domain):
        tracker = ConversationTracker("t", toy_domain.slot_names)
        tracker.apply(
            UserMessage(
                text="học phần là cái gì",
                intent="dinhNghia",
                confidence=1.0,
                entities=({"entity": "dn", "raw_value": "học phần", "value": "học phần"},),
            )
        )
        tracker.apply(SlotSet("dn", "học phần"))
        state = featurize_tracker(tracker, toy_domain)
        assert state.sum() == 3.0  # intent + entity flag + slot flag

    def test_bit_count_bound(self, toy_domain):
        tracker = ConversationTracker("t", toy_domain.slot_names)
        tracker.apply(
            UserMessage(
                text="x",
                intent="dinhNghia",
                confidence=1.0,
                entities=({"entity": "dn", "raw_value": "a", "value": "a"},),
            )
        )
        tracker.apply(SlotSet("dn", "a"))
        tracker.apply(ActionExecuted("action_dn"))
        state = featurize_tracker(tracker, toy_domain)
        bound = 2 + len(toy_domain.entity_names) + len(toy_domain.slot_names)
        assert state.sum() <= bound

    def test_unknown_intent_rejected(self, toy_domain):
        tracker = ConversationTracker("t", toy_domain.slot_names)
        tracker.apply(UserMessage(text="x", intent="ghost", confidence=1.0))
        with pytest.raises(EngineError, match="ghost"):
            featurize_tracker(tracker, toy_domain)


class TestStoriesToSequences:
    def test_one_example_per_action_plus_listens(self, toy_domain, toy_story):
        examples = stories_to_sequences([toy_story], toy_domain)
        explicit = 9  # bot actions written in the story
        # a listen example follows each turn except the one ending in restart
        assert len(examples) == explicit + 4

    def test_targets_in_story_order(self, toy_domain, toy_story):
        examples = stories_to_sequences([toy_story], toy_domain)
        names = [toy_domain.actions[target] for _, target in examples]
        assert names == [
            "utter_xinChao",
            "action_listen",
            "utter_AnnaInfo",
            "utter_continue",
            "action_listen",
            "action_dn",
            "reset_slots",
            "utter_continue",
            "action_listen",
            "utter_finish",
            "action_listen",
            "utter_bye",
            "action_restart",
        ]

    def test_windows_are_fixed_length(self, toy_domain, toy_story):
        for window, _ in stories_to_sequences([toy_story], toy_domain, max_history=5):
            assert window.shape == (5, toy_domain.state_size)

    def test_short_history_left_padded(self, toy_domain):
        story = parse_stories('## s\n* xinChao\n  - utter_xinChao\n')[0]
        examples = stories_to_sequences([story], toy_domain, max_history=5)
        window, _ = examples[0]
        assert not window[:4].any()
        assert window[4].any()

    def test_out_of_domain_action_rejected(self, toy_domain):
        story = parse_stories("## s\n* xinChao\n  - utter_ghost\n")[0]
        with pytest.raises(EngineError, match="utter_ghost"):
            stories_to_sequences([story], toy_domain)


class TestTraining:
    def test_single_story_memorized(self, toy_domain, toy_story):
        examples = stories_to_sequences([toy_story], toy_domain)
        model, trace = train_policy(examples, toy_domain, epochs=200, seed=0)
        inputs = np.stack([w for w, _ in examples])
        targets = np.array([t for _, t in examples])
        predicted = [predict_action(model, list(w)).argmax() for w in inputs]
        assert list(predicted) == list(targets)
        assert trace.accuracies[-1] == 1.0

    def test_first_epoch_reduces_loss(self, toy_domain, toy_story):
        examples = stories_to_sequences([toy_story], toy_domain)
        inputs = np.stack([w for w, _ in examples])
        targets = np.array([t for _, t in examples])
        params = _init_params(toy_domain.state_size, 8, len(toy_domain.actions), seed=1)
        initial, _ = loss_and_gradients(params, inputs, targets)
        _, trace = train_policy(examples, toy_domain, epochs=1, seed=1, hidden_size=8)
        assert trace.losses[0] < initial

    def test_seeded_determinism(self, toy_domain, toy_story):
        examples = stories_to_sequences([toy_story], toy_domain)
        first, _ = train_policy(examples, toy_domain, epochs=30, seed=3)
        second, _ = train_policy(examples, toy_domain, epochs=30, seed=3)
        for key in first.params:
            assert np.array_equal(first.params[key], second.params[key])

    def test_empty_sequences_rejected(self, toy_domain):
        with pytest.raises(TrainingError):
            train_policy([], toy_domain)


@pytest.fixture(scope="module")
def model(toy_domain, toy_story):
    examples = stories_to_sequences([toy_story], toy_domain)
    trained, _ = train_policy(examples, toy_domain, epochs=150, seed=0)
    return trained


class TestPredict:
    def test_distribution_sums_to_one(self, model, toy_domain):
        rng = np.random.default_rng(0)
        for _ in range(20):
            states = [rng.integers(0, 2, toy_domain.state_size).astype(float)]
            probs = predict_action(model, states)
            assert probs.shape == (len(toy_domain.actions),)
            assert abs(probs.sum() - 1.0) < 1e-9

    def test_pure_function(self, model, toy_domain):
        state = np.zeros(toy_domain.state_size)
        state[0] = 1.0
        assert np.array_equal(predict_action(model, [state]), predict_action(model, [state]))

    def test_window_discipline(self, model, toy_domain):
        rng = np.random.default_rng(1)
        recent = [rng.integers(0, 2, toy_domain.state_size).astype(float) for _ in range(5)]
        older = [rng.integers(0, 2, toy_domain.state_size).astype(float) for _ in range(4)]
        assert np.array_equal(
            predict_action(model, recent), predict_action(model, older + recent)
        )

    def test_definition_turn_predicts_lookup_action(self, model, toy_domain, toy_story):
        examples = stories_to_sequences([toy_story], toy_domain)
        target_index = toy_domain.actions.index("action_dn")
        window = next(w for w, t in examples if t == target_index)
        probs = predict_action(model, list(window))
        assert toy_domain.actions[int(probs.argmax())] == "action_dn"

    def test_logit_shift_invariance(self, model, toy_domain):
        state = np.ones(toy_domain.state_size)
        probs = predict_action(model, [state])
        shifted = model.params["b_out"] + 7.5
        shifted_model = PolicyModel(
            hidden_size=model.hidden_size,
            max_history=model.max_history,
            state_size=model.state_size,
            actions=model.actions,
            domain_fingerprint=model.domain_fingerprint,
            params={**model.params, "b_out": shifted},
        )
        assert np.allclose(probs, predict_action(shifted_model, [state]), atol=1e-12)

    def test_shape_mismatch_rejected(self, model):
        with pytest.raises(EngineError):
            predict_action(model, [np.zeros(model.state_size + 1)])


class TestGradientCheck:
    def _random_batch(self, state_size, actions, n=2, steps=3, seed=0):
        rng = np.random.default_rng(seed)
        inputs = rng.integers(0, 2, size=(n, steps, state_size)).astype(float)
        targets = rng.integers(0, actions, size=n)
        return inputs, targets

    def _model(self, state_size=6, hidden=4, actions=5, seed=0):
        return PolicyModel(
            hidden_size=hidden,
            max_history=3,
            state_size=state_size,
            actions=tuple(f"a{i}" for i in range(actions)),
            domain_fingerprint="test",
            params=_init_params(state_size, hidden, actions, seed=seed),
        )

    def test_analytic_matches_finite_differences(self):
        model = self._model(seed=2)
        inputs, targets = self._random_batch(6, 5, seed=3)
        assert policy_gradient_check(model, inputs, targets) < 1e-4

    def test_zero_weight_model_well_defined(self):
        model = self._model()
        for key in model.params:
            model.params[key] = np.zeros_like(model.params[key])
        inputs, targets = self._random_batch(6, 5, seed=4)
        assert policy_gradient_check(model, inputs, targets) < 1e-4

    def test_duplicated_batch_doubles_summed_gradient(self):
        model = self._model(seed=5)
        inputs, targets = self._random_batch(6, 5, seed=6)
        _, single = loss_and_gradients(model.params, inputs, targets, reduction="sum")
        doubled_inputs = np.concatenate([inputs, inputs])
        doubled_targets = np.concatenate([targets, targets])
        _, double = loss_and_gradients(
            model.params, doubled_inputs, doubled_targets, reduction="sum"
        )
        for key in single:
            assert np.allclose(double[key], 2 * single[key], atol=1e-12)


class TestPadWindow:
    def test_empty_history_all_zeros(self):
        window = pad_window([], 4, 3)
        assert window.shape == (4, 3)
        assert not window.any()

    def test_truncates_to_window(self):
        states = [np.full(2, float(i)) for i in range(6)]
        window = pad_window(states, 3, 2)
        assert np.array_equal(window, np.array([[3.0, 3.0], [4.0, 4.0], [5.0, 5.0]]))
