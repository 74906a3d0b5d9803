"""Per-conversation state: slots, event log, last intent and entities.

All state transitions happen in ``apply``, so replaying an event log into a
fresh tracker reproduces the exact same state (and therefore the exact same
featurization) at every point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True)
class UserMessage:
    text: str
    intent: str | None
    confidence: float
    entities: tuple[dict, ...] = ()  # {entity, raw_value, value, start, end, matched}


@dataclass(frozen=True)
class ActionExecuted:
    name: str


@dataclass(frozen=True)
class SlotSet:
    name: str
    value: str | None


@dataclass(frozen=True)
class Restarted:
    pass


Event = Union[UserMessage, ActionExecuted, SlotSet, Restarted]

RESET_SLOTS = "reset_slots"
ACTION_RESTART = "action_restart"
ACTION_LISTEN = "action_listen"


@dataclass
class ConversationTracker:
    sender_id: str
    slot_names: tuple[str, ...]
    slots: dict[str, str | None] = field(default_factory=dict)
    events: list[Event] = field(default_factory=list)
    last_action: str | None = None
    current_intent: str | None = None
    current_entities: frozenset[str] = frozenset()
    message_count: int = 0

    def __post_init__(self):
        if not self.slots:
            self.slots = {name: None for name in self.slot_names}

    def apply(self, event: Event) -> None:
        self.events.append(event)
        if isinstance(event, UserMessage):
            self.current_intent = event.intent
            self.current_entities = frozenset(e["entity"] for e in event.entities)
            self.message_count += 1
        elif isinstance(event, SlotSet):
            if event.name not in self.slots:
                raise KeyError(f"unknown slot {event.name!r}")
            self.slots[event.name] = event.value
        elif isinstance(event, ActionExecuted):
            self.last_action = event.name
            if event.name == RESET_SLOTS:
                self.slots = {name: None for name in self.slot_names}
        elif isinstance(event, Restarted):
            self.slots = {name: None for name in self.slot_names}
            self.last_action = None
            self.current_intent = None
            self.current_entities = frozenset()

    def replay(self) -> "ConversationTracker":
        """Rebuild an identical tracker from this tracker's event log."""
        fresh = ConversationTracker(sender_id=self.sender_id, slot_names=self.slot_names)
        for event in list(self.events):
            fresh.apply(event)
        return fresh
