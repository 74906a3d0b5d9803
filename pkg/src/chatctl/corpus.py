"""Parsers for the three human-authored training files and the domain universe.

The engine is trained from three small text DSLs:

* an NLU file (``## intent:<name>`` headers, ``- <pattern>`` lines, entities
  marked ``[value](entity_name)``),
* a templates file (``templates:`` root, action keys, ``- text:`` variants),
* a stories file (``## <name>`` headers, ``* <intent>`` user turns,
  ``- <action>`` bot steps, ``- slot{...}`` assignments).

All offsets are byte offsets into the UTF-8 encoding of the de-marked-up
text, validated at parse time so downstream code never slices an invalid
boundary.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

CONTROL_ACTIONS = ("action_listen", "action_restart", "reset_slots")

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


def byte_len(text: str) -> int:
    return len(text.encode("utf-8"))


def byte_slice(text: str, start: int, end: int) -> str:
    """Slice by UTF-8 byte offsets. Raises on a non-boundary offset."""
    return text.encode("utf-8")[start:end].decode("utf-8")


@dataclass(frozen=True)
class EntitySpan:
    start: int
    end: int
    value: str
    entity_name: str

    def __post_init__(self):
        if not self.value:
            raise ValidationError("entity span value must be non-empty")
        if not self.entity_name:
            raise ValidationError("entity span name must be non-empty")


@dataclass(frozen=True)
class AnnotatedUtterance:
    """A training sentence with inline entity spans (markup removed)."""

    text: str
    spans: tuple[EntitySpan, ...] = ()

    def __post_init__(self):
        total = byte_len(self.text)
        prev_end = 0
        for span in self.spans:
            if not (0 <= span.start < span.end <= total):
                raise ValidationError(
                    f"span [{span.start}:{span.end}] out of bounds for {self.text!r}"
                )
            if span.start < prev_end:
                raise ValidationError(f"overlapping spans in {self.text!r}")
            sliced = byte_slice(self.text, span.start, span.end)
            if sliced != span.value:
                raise ValidationError(
                    f"span value {span.value!r} does not match text slice {sliced!r}"
                )
            prev_end = span.end


@dataclass(frozen=True)
class IntentDef:
    name: str
    patterns: tuple[AnnotatedUtterance, ...]


@dataclass(frozen=True)
class ResponseTemplate:
    action_name: str
    variants: tuple[str, ...]

    def __post_init__(self):
        if not self.variants:
            raise ValidationError(f"template {self.action_name} has no variants")


@dataclass(frozen=True)
class UserTurn:
    intent_name: str
    entity_assignments: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class BotAction:
    action_name: str


StoryStep = UserTurn | BotAction


@dataclass(frozen=True)
class Story:
    name: str
    steps: tuple[StoryStep, ...]


@dataclass(frozen=True)
class DomainSpec:
    """The domain universe with deterministic (lexicographic) ordering.

    Featurization indices are derived from these tuples, so two corpora
    with equal contents always produce identical index assignments.
    """

    intents: tuple[str, ...]
    entity_names: tuple[str, ...]
    slot_names: tuple[str, ...]
    actions: tuple[str, ...]
    templates: dict[str, ResponseTemplate]

    @property
    def state_size(self) -> int:
        return (
            len(self.intents)
            + len(self.entity_names)
            + len(self.slot_names)
            + len(self.actions)
        )

    def intent_index(self, name: str) -> int:
        return self.intents.index(name)

    def action_index(self, name: str) -> int:
        return self.actions.index(name)

    def fingerprint(self) -> str:
        payload = "\n".join(
            [
                "intents:" + ",".join(self.intents),
                "entities:" + ",".join(self.entity_names),
                "slots:" + ",".join(self.slot_names),
                "actions:" + ",".join(self.actions),
            ]
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# --- NLU file ---------------------------------------------------------------

_INTENT_HEADER = re.compile(r"##\s*intent\s*:\s*(\S+)\s*$")


def _parse_pattern(body: str, line_no: int) -> AnnotatedUtterance:
    """Strip ``[value](name)`` markup and record byte-offset spans."""
    pieces: list[str] = []
    spans: list[EntitySpan] = []
    pos = 0  # byte offset into the de-marked-up text
    i = 0
    n = len(body)
    while i < n:
        ch = body[i]
        if ch == "[":
            close = body.find("]", i + 1)
            if close < 0:
                raise ParseError("unbalanced '[' in pattern", line_no)
            value = body[i + 1 : close]
            if "[" in value:
                raise ParseError("nested '[' in pattern", line_no)
            j = close + 1
            while j < n and body[j] == " ":
                j += 1
            if j >= n or body[j] != "(":
                raise ParseError("expected '(entity_name)' after ']'", line_no)
            end_paren = body.find(")", j + 1)
            if end_paren < 0:
                raise ParseError("unbalanced '(' in entity name", line_no)
            name = body[j + 1 : end_paren].strip()
            if not value.strip():
                raise ParseError("empty entity value", line_no)
            if not _IDENT.match(name):
                raise ParseError(f"invalid entity name {name!r}", line_no)
            start = pos
            pieces.append(value)
            pos += byte_len(value)
            spans.append(EntitySpan(start, pos, value, name))
            i = end_paren + 1
        elif ch == "]":
            raise ParseError("unbalanced ']' in pattern", line_no)
        else:
            pieces.append(ch)
            pos += byte_len(ch)
            i += 1
    text = "".join(pieces)
    if not text.strip():
        raise ParseError("empty pattern", line_no)
    return AnnotatedUtterance(text=text, spans=tuple(spans))


def parse_nlu(source: str) -> list[IntentDef]:
    """Parse the NLU DSL into intent definitions, preserving input order."""
    intents: list[IntentDef] = []
    seen: set[str] = set()
    current_name: str | None = None
    current_line = 0
    patterns: list[AnnotatedUtterance] = []
    texts: set[str] = set()

    def flush():
        nonlocal current_name, patterns, texts
        if current_name is None:
            return
        if not patterns:
            raise ParseError(f"intent {current_name!r} has no patterns", current_line)
        intents.append(IntentDef(name=current_name, patterns=tuple(patterns)))
        current_name, patterns, texts = None, [], set()

    for line_no, raw in enumerate(source.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("##"):
            match = _INTENT_HEADER.match(line)
            if not match:
                raise ParseError(f"malformed intent header {line!r}", line_no)
            flush()
            name = match.group(1)
            if not _IDENT.match(name):
                raise ParseError(f"invalid intent name {name!r}", line_no)
            if name in seen:
                raise ParseError(f"duplicate intent {name!r}", line_no)
            seen.add(name)
            current_name = name
            current_line = line_no
        elif line.startswith("#"):
            continue
        elif line.startswith("-"):
            if current_name is None:
                raise ParseError("pattern outside any intent block", line_no)
            utt = _parse_pattern(line[1:].strip(), line_no)
            if utt.text in texts:
                raise ParseError(f"duplicate pattern {utt.text!r}", line_no)
            texts.add(utt.text)
            patterns.append(utt)
        else:
            raise ParseError(f"unexpected line {line!r}", line_no)
    flush()
    return intents


def render_nlu(intents: list[IntentDef]) -> str:
    """Render intents back to canonical DSL text (re-parses structurally equal)."""
    lines: list[str] = []
    for intent in intents:
        lines.append(f"## intent:{intent.name}")
        for utt in intent.patterns:
            pieces: list[str] = []
            cursor = 0
            for span in utt.spans:
                pieces.append(byte_slice(utt.text, cursor, span.start))
                pieces.append(f"[{span.value}]({span.entity_name})")
                cursor = span.end
            pieces.append(byte_slice(utt.text, cursor, byte_len(utt.text)))
            lines.append("- " + "".join(pieces))
        lines.append("")
    return "\n".join(lines)


# --- Templates file ---------------------------------------------------------


def parse_templates(source: str) -> list[ResponseTemplate]:
    """Parse the response templates DSL, variants in file order."""
    root_seen = False
    order: list[str] = []
    variants: dict[str, list[str]] = {}
    current: str | None = None
    current_line = 0

    for line_no, raw in enumerate(source.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "templates:":
            if root_seen:
                raise ParseError("duplicate 'templates:' root", line_no)
            root_seen = True
            continue
        if not root_seen:
            raise ParseError("expected 'templates:' root before entries", line_no)
        if line.startswith("-"):
            if current is None:
                raise ParseError("variant outside any action key", line_no)
            body = line[1:].strip()
            if not body.startswith("text:"):
                raise ParseError("expected '- text: <variant>'", line_no)
            text = body[len("text:") :].strip()
            if not text:
                raise ParseError(f"empty variant for action {current!r}", line_no)
            variants[current].append(text)
        elif line.endswith(":"):
            name = line[:-1].strip()
            if not _IDENT.match(name):
                raise ParseError(f"invalid action name {name!r}", line_no)
            if name in variants:
                raise ParseError(f"duplicate action key {name!r}", line_no)
            if current is not None and not variants[current]:
                raise ParseError(f"action {current!r} has no variants", current_line)
            order.append(name)
            variants[name] = []
            current = name
            current_line = line_no
        else:
            raise ParseError(f"unexpected line {line!r}", line_no)

    if not root_seen and source.strip():
        raise ParseError("missing 'templates:' root", 1)
    if current is not None and not variants[current]:
        raise ParseError(f"action {current!r} has no variants", current_line)
    return [
        ResponseTemplate(action_name=name, variants=tuple(variants[name]))
        for name in order
    ]


def render_templates(templates: list[ResponseTemplate]) -> str:
    lines = ["templates:"]
    for template in templates:
        lines.append(f"  {template.action_name}:")
        for variant in template.variants:
            lines.append(f"    - text: {variant}")
    lines.append("")
    return "\n".join(lines)


# --- Stories file -----------------------------------------------------------

_USER_TURN = re.compile(r"\*\s*([A-Za-z_][A-Za-z0-9_]*)\s*(.*)$")


def _parse_payload(text: str, line_no: int) -> dict[str, str]:
    """Parse ``{"k": "v"}`` or the paren variant ``("k": "v")`` seen in
    hand-authored files. Single-element list values normalize to scalars."""
    text = text.strip()
    if text.startswith("{") and text.endswith("}"):
        inner = text
    elif text.startswith("(") and text.endswith(")"):
        inner = "{" + text[1:-1] + "}"
    else:
        raise ParseError(f"malformed payload {text!r}", line_no)
    try:
        obj = json.loads(inner)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed payload: {exc.msg}", line_no) from exc
    if not isinstance(obj, dict):
        raise ParseError("payload must be a mapping", line_no)
    out: dict[str, str] = {}
    for key, value in obj.items():
        if isinstance(value, list):
            if len(value) != 1 or not isinstance(value[0], str):
                raise ParseError(f"slot value for {key!r} must be a string", line_no)
            value = value[0]
        if not isinstance(value, str):
            raise ParseError(f"slot value for {key!r} must be a string", line_no)
        out[str(key)] = value
    return out


def parse_stories(source: str) -> list[Story]:
    """Parse the stories DSL. ``- slot{...}`` lines fold into the prior turn."""
    stories: list[Story] = []
    name: str | None = None
    name_line = 0
    steps: list[StoryStep] = []

    def flush(line_no: int):
        nonlocal name, steps
        if name is None:
            return
        if not steps:
            raise ParseError(f"story {name!r} is empty", name_line)
        for i, step in enumerate(steps):
            if isinstance(step, UserTurn):
                if i + 1 >= len(steps) or not isinstance(steps[i + 1], BotAction):
                    raise ParseError(
                        f"user turn {step.intent_name!r} in story {name!r} "
                        "is not followed by a bot action",
                        line_no,
                    )
        stories.append(Story(name=name, steps=tuple(steps)))
        name, steps = None, []

    for line_no, raw in enumerate(source.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("##"):
            flush(line_no)
            story_name = line[2:].strip()
            if not story_name:
                raise ParseError("story header has no name", line_no)
            name = story_name
            name_line = line_no
        elif line.startswith("#"):
            continue
        elif line.startswith("*"):
            if name is None:
                raise ParseError("user turn outside any story", line_no)
            match = _USER_TURN.match(line)
            if not match:
                raise ParseError(f"malformed user turn {line!r}", line_no)
            intent_name, rest = match.group(1), match.group(2).strip()
            assignments = _parse_payload(rest, line_no) if rest else {}
            steps.append(UserTurn(intent_name=intent_name, entity_assignments=assignments))
        elif line.startswith("-"):
            if name is None:
                raise ParseError("bot action outside any story", line_no)
            body = line[1:].strip()
            if re.match(r"slot\s*[({]", body):
                payload = _parse_payload(body[len("slot") :], line_no)
                last_turn = next(
                    (s for s in reversed(steps) if isinstance(s, UserTurn)), None
                )
                if last_turn is None:
                    raise ParseError("slot line before any user turn", line_no)
                last_turn.entity_assignments.update(payload)
            else:
                if not _IDENT.match(body):
                    raise ParseError(f"invalid action name {body!r}", line_no)
                if not any(isinstance(s, UserTurn) for s in steps):
                    raise ParseError("bot action before any user turn", line_no)
                steps.append(BotAction(action_name=body))
        else:
            raise ParseError(f"unexpected line {line!r}", line_no)
    flush(len(source.splitlines()))
    return stories


def render_stories(stories: list[Story]) -> str:
    lines: list[str] = []
    for story in stories:
        lines.append(f"## {story.name}")
        for step in story.steps:
            if isinstance(step, UserTurn):
                if step.entity_assignments:
                    payload = json.dumps(
                        step.entity_assignments, ensure_ascii=False, sort_keys=True
                    )
                    lines.append(f"* {step.intent_name}{payload}")
                else:
                    lines.append(f"* {step.intent_name}")
            else:
                lines.append(f"  - {step.action_name}")
        lines.append("")
    return "\n".join(lines)


# --- Domain -----------------------------------------------------------------


def build_domain(
    intents: list[IntentDef],
    templates: list[ResponseTemplate],
    stories: list[Story],
    extra_actions: tuple[str, ...] = (),
) -> DomainSpec:
    """Assemble the domain universe and validate story references.

    Control actions are always present; each entity fills a same-named slot.
    """
    intent_names = sorted(i.name for i in intents)
    entity_names: set[str] = set()
    for intent in intents:
        for utt in intent.patterns:
            entity_names.update(span.entity_name for span in utt.spans)
    template_map = {t.action_name: t for t in templates}
    actions = set(template_map) | set(CONTROL_ACTIONS) | set(extra_actions)

    offenders: list[str] = []
    for story in stories:
        for step in story.steps:
            if isinstance(step, UserTurn):
                if step.intent_name not in intent_names:
                    offenders.append(f"intent {step.intent_name!r} (story {story.name!r})")
                entity_names.update(step.entity_assignments)
            elif step.action_name not in actions:
                offenders.append(f"action {step.action_name!r} (story {story.name!r})")
    for action in sorted(actions):
        if action.startswith("utter_") and action not in template_map:
            offenders.append(f"action {action!r} has no template")
    if offenders:
        raise ValidationError(
            "unresolvable references: " + "; ".join(sorted(set(offenders)))
        )

    entity_tuple = tuple(sorted(entity_names))
    return DomainSpec(
        intents=tuple(intent_names),
        entity_names=entity_tuple,
        slot_names=entity_tuple,
        actions=tuple(sorted(actions)),
        templates=template_map,
    )
