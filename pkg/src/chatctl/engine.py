"""The conversation loop.

A user message runs through NLU (intent SVM + entity CRF), entity
normalization (kNN), slot updates, and then an iterative predict/execute
loop against the LSTM policy until the policy yields the listen action (or
a hard safety bound trips). Responses are rendered from templates or a
knowledge base keyed by slot values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import BotAction, DomainSpec, ResponseTemplate, Story, UserTurn
from .crf import CrfModel, extract_entities
from .errors import EngineError, ParseError
from .knn import KnnIndex, normalize_entity, regex_normalize
from .policy import (
    PolicyModel,
    apply_story_action,
    apply_story_turn,
    featurize_tracker,
    predict_action,
)
from .svm import IntentPrediction, SvmModel, predict_intent
from .textfeat import EmbeddingTable, sentence_vector, tokenize
from .tracker import (
    ACTION_LISTEN,
    ACTION_RESTART,
    RESET_SLOTS,
    ActionExecuted,
    ConversationTracker,
    Restarted,
    SlotSet,
    UserMessage,
)
from .util import stable_hash

MAX_ACTIONS_PER_MESSAGE = 10


@dataclass(frozen=True)
class EngineConfig:
    confidence_threshold: float = 0.3
    fallback_action: str = "utter_fallback"
    fallback_text: str = "Xin lỗi, mình chưa hiểu ý bạn."
    kb_missing_text: str = "Xin lỗi, mình chưa có thông tin về mục này."
    custom_action_slots: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class KnowledgeBase:
    """Flat (custom action, normalized key) -> answer store."""

    entries: dict[tuple[str, str], str] = field(default_factory=dict)

    def lookup(self, action: str, key: str) -> str | None:
        return self.entries.get((action, key))


def load_knowledge_base(path: str) -> KnowledgeBase:
    """Knowledge file: one ``action<TAB>key<TAB>answer`` per line."""
    entries: dict[tuple[str, str], str] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected 'action<TAB>key<TAB>answer'", line_no)
            action, key, answer = (p.strip() for p in parts)
            if not action or not key or not answer:
                raise ParseError("empty knowledge-base field", line_no)
            entries[(action, regex_normalize(key))] = answer
    return KnowledgeBase(entries=entries)


@dataclass
class BotResponse:
    text: str
    debug: dict | None = None


def render_template(template: ResponseTemplate, seed: int) -> str:
    """Seeded uniform choice among the template's variants."""
    rng = np.random.default_rng(seed)
    return template.variants[int(rng.integers(len(template.variants)))]


@dataclass(frozen=True)
class StoryReplay:
    name: str
    comparisons: tuple[tuple[str, str], ...]  # (expected, predicted)

    @property
    def passed(self) -> bool:
        return all(expected == predicted for expected, predicted in self.comparisons)


class DialogueEngine:
    """Holds the trained models and drives conversations.

    Models are immutable; per-sender trackers (and their policy state
    histories) are the only mutable state.
    """

    def __init__(
        self,
        domain: DomainSpec,
        embeddings: EmbeddingTable,
        intent_model: SvmModel,
        entity_model: CrfModel,
        knn_index: KnnIndex,
        policy_model: PolicyModel,
        knowledge: KnowledgeBase | None = None,
        config: EngineConfig | None = None,
    ):
        self.domain = domain
        self.embeddings = embeddings
        self.intent_model = intent_model
        self.entity_model = entity_model
        self.knn_index = knn_index
        self.policy_model = policy_model
        self.knowledge = knowledge or KnowledgeBase()
        self.config = config or EngineConfig()
        self._histories: dict[str, list[np.ndarray]] = {}

        if policy_model.domain_fingerprint != domain.fingerprint():
            raise EngineError("policy model domain fingerprint does not match the domain")
        for action in domain.actions:
            if (
                not action.startswith("utter_")
                and action not in (ACTION_LISTEN, ACTION_RESTART, RESET_SLOTS)
                and action not in self.config.custom_action_slots
            ):
                raise EngineError(f"custom action {action!r} has no slot mapping")

    # --- lifecycle -----------------------------------------------------------

    def new_tracker(self, sender_id: str) -> ConversationTracker:
        tracker = ConversationTracker(sender_id=sender_id, slot_names=self.domain.slot_names)
        self._histories[sender_id] = []
        return tracker

    def _history(self, tracker: ConversationTracker) -> list[np.ndarray]:
        return self._histories.setdefault(tracker.sender_id, [])

    def restart(self, tracker: ConversationTracker) -> None:
        tracker.apply(Restarted())
        self._history(tracker).clear()

    # --- NLU -----------------------------------------------------------------

    def parse(self, text: str) -> tuple[IntentPrediction, list[dict]]:
        """Intent ranking plus normalized entities, without touching state."""
        tokens = tokenize(text)
        vec = sentence_vector(tokens, self.embeddings)
        prediction = predict_intent(self.intent_model, vec)
        entities = []
        for span in extract_entities(self.entity_model, tokens, text):
            result = normalize_entity(self.knn_index, span.value)
            entities.append(
                {
                    "entity": span.entity_name,
                    "raw_value": span.value,
                    "value": result.value if result.matched else span.value,
                    "start": span.start,
                    "end": span.end,
                    "matched": result.matched,
                }
            )
        return prediction, entities

    # --- conversation cycle ----------------------------------------------------

    def handle_message(
        self, tracker: ConversationTracker, text: str, seed: int = 0
    ) -> list[BotResponse]:
        """Run one full user turn; returns every utterance emitted."""
        prediction, entities = self.parse(text)
        debug = {
            "intent_ranking": [[name, conf] for name, conf in prediction.ranking],
            "entities": entities,
            "action_chain": [],
        }
        tracker.apply(
            UserMessage(
                text=text,
                intent=prediction.intent,
                confidence=prediction.confidence,
                entities=tuple(entities),
            )
        )
        for ent in entities:
            tracker.apply(SlotSet(ent["entity"], regex_normalize(ent["value"])))

        responses: list[BotResponse] = []
        if prediction.confidence < self.config.confidence_threshold:
            responses.append(self._fallback_response(tracker, seed, debug))
        else:
            history = self._history(tracker)
            for position in range(MAX_ACTIONS_PER_MESSAGE):
                history.append(featurize_tracker(tracker, self.domain))
                probs = predict_action(self.policy_model, history)
                action = self.policy_model.actions[int(np.argmax(probs))]
                debug["action_chain"].append(action)
                if action == ACTION_LISTEN:
                    tracker.apply(ActionExecuted(ACTION_LISTEN))
                    break
                response = self.execute_action(tracker, action, stable_hash(seed, position))
                if response is not None:
                    responses.append(response)
                if action == ACTION_RESTART:
                    break
        for response in responses:
            response.debug = debug
        return responses

    def _fallback_text(self, seed: int) -> str:
        template = self.domain.templates.get(self.config.fallback_action)
        if template is not None:
            return render_template(template, stable_hash(seed, "fallback"))
        return self.config.fallback_text

    def _fallback_response(self, tracker, seed: int, debug: dict) -> BotResponse:
        text = self._fallback_text(seed)
        if self.config.fallback_action in self.domain.actions:
            tracker.apply(ActionExecuted(self.config.fallback_action))
            debug["action_chain"].append(self.config.fallback_action)
        tracker.apply(ActionExecuted(ACTION_LISTEN))
        debug["action_chain"].append(ACTION_LISTEN)
        return BotResponse(text=text)

    def execute_action(
        self, tracker: ConversationTracker, action: str, seed: int
    ) -> BotResponse | None:
        """Execute one action against the tracker. Control actions return
        None; utter and custom actions return a response."""
        if action not in self.domain.actions:
            raise EngineError(f"unknown action {action!r}")
        if action == ACTION_LISTEN:
            tracker.apply(ActionExecuted(action))
            return None
        if action == ACTION_RESTART:
            tracker.apply(ActionExecuted(action))
            tracker.apply(Restarted())
            self._history(tracker).clear()
            return None
        if action == RESET_SLOTS:
            tracker.apply(ActionExecuted(action))
            return None
        if action.startswith("utter_"):
            tracker.apply(ActionExecuted(action))
            return BotResponse(text=render_template(self.domain.templates[action], seed))
        slot_name = self.config.custom_action_slots[action]
        key = tracker.slots.get(slot_name)
        answer = self.knowledge.lookup(action, key) if key else None
        tracker.apply(ActionExecuted(action))
        return BotResponse(text=answer if answer is not None else self.config.kb_missing_text)

    # --- story replay ----------------------------------------------------------

    def replay_story(self, story: Story) -> StoryReplay:
        """Drive the tracker with the story's turns (bypassing NLU) and
        compare the policy's prediction at every explicit story action.
        Expected actions are teacher-forced so comparisons don't cascade."""
        tracker = ConversationTracker(
            sender_id=f"replay:{story.name}", slot_names=self.domain.slot_names
        )
        history: list[np.ndarray] = []
        comparisons: list[tuple[str, str]] = []

        def predict_here() -> str:
            history.append(featurize_tracker(tracker, self.domain))
            probs = predict_action(self.policy_model, history)
            return self.policy_model.actions[int(np.argmax(probs))]

        steps = list(story.steps)
        for i, step in enumerate(steps):
            if isinstance(step, UserTurn):
                if step.intent_name not in self.domain.intents:
                    raise EngineError(f"story intent {step.intent_name!r} not in domain")
                apply_story_turn(tracker, step)
            else:
                if step.action_name not in self.domain.actions:
                    raise EngineError(f"story action {step.action_name!r} not in domain")
                comparisons.append((step.action_name, predict_here()))
                apply_story_action(tracker, step.action_name, history)
                next_is_action = i + 1 < len(steps) and isinstance(steps[i + 1], BotAction)
                if not next_is_action and step.action_name != ACTION_RESTART:
                    predict_here()
                    apply_story_action(tracker, ACTION_LISTEN, history)
        return StoryReplay(name=story.name, comparisons=tuple(comparisons))


def request_seed(global_seed: int, sender_id: str, message_index: int) -> int:
    """Deterministic yet varied per-request seed for template choice."""
    return stable_hash(global_seed, sender_id, message_index)
