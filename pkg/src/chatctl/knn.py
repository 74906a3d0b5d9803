"""Typo and diacritic-loss normalization of extracted entity values.

A corruption generator fabricates misspelled variants of every canonical
lexicon value; the variants plus the canonical values form a kNN index in
the character unigram+bigram space (diacritic-folded, so diacritic loss
costs zero distance). Queries are regex-normalized, then matched by
majority vote among the k nearest points under Euclidean distance.
"""

from __future__ import annotations

import hashlib
import math
import re
import string
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, TrainingError, ValidationError
from .textfeat import FeatureVector, char_vector, fold_diacritics

DEFAULT_KS = (11, 13, 15, 17, 19)

CORRUPTION_RULES = (
    "strip_diacritics",
    "delete_char",
    "substitute_adjacent_key",
    "transpose_adjacent",
    "drop_final_consonant",
)

# Fixed QWERTY neighbor map so substitution corruptions are reproducible.
_QWERTY_ROWS = ("qwertyuiop", "asdfghjkl", "zxcvbnm")
_ADJACENT: dict[str, str] = {}
for _row_i, _row in enumerate(_QWERTY_ROWS):
    for _col, _ch in enumerate(_row):
        near = []
        if _col > 0:
            near.append(_row[_col - 1])
        if _col + 1 < len(_row):
            near.append(_row[_col + 1])
        for _other in (_row_i - 1, _row_i + 1):
            if 0 <= _other < len(_QWERTY_ROWS) and _col < len(_QWERTY_ROWS[_other]):
                near.append(_QWERTY_ROWS[_other][_col])
        _ADJACENT[_ch] = "".join(near)

_VOWELS = set("aeiouy")


@dataclass(frozen=True)
class EntityLexicon:
    entries: tuple[tuple[str, str], ...]  # (canonical value, entity_name)

    def __post_init__(self):
        if not self.entries:
            raise ValidationError("lexicon is empty")
        seen: set[tuple[str, str]] = set()
        for value, name in self.entries:
            if (value, name) in seen:
                raise ValidationError(f"duplicate lexicon entry {value!r} for {name!r}")
            seen.add((value, name))

    def values(self) -> list[str]:
        return [value for value, _ in self.entries]


def load_lexicon(path: str) -> EntityLexicon:
    """Lexicon file: one ``entity_name<TAB>canonical value`` per line."""
    entries: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected 'entity_name<TAB>value'", line_no)
            name, value = parts[0].strip(), parts[1].strip()
            if not name or not value:
                raise ParseError("empty lexicon field", line_no)
            entries.append((value, name))
    return EntityLexicon(entries=tuple(entries))


def lexicon_from_nlu(intents) -> EntityLexicon:
    """Derive a lexicon from the entity spans of parsed NLU data."""
    entries: dict[tuple[str, str], None] = {}
    for intent in intents:
        for utt in intent.patterns:
            for span in utt.spans:
                entries.setdefault((span.value, span.entity_name), None)
    return EntityLexicon(entries=tuple(entries))


@dataclass(frozen=True)
class CorruptionSpec:
    rules: tuple[str, ...] = CORRUPTION_RULES
    variants_per_value: int = 6
    seed: int = 0

    def __post_init__(self):
        if not self.rules:
            raise ValidationError("at least one corruption rule must be enabled")
        for rule in self.rules:
            if rule not in CORRUPTION_RULES:
                raise ValidationError(f"unknown corruption rule {rule!r}")
        if self.variants_per_value < 1:
            raise ValidationError("variants_per_value must be at least 1")


def _value_rng(seed: int, value: str) -> np.random.Generator:
    digest = hashlib.blake2b(f"{seed}:{value}".encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def _apply_rule(rule: str, value: str, rng: np.random.Generator) -> str | None:
    if rule == "strip_diacritics":
        stripped = fold_diacritics(value)
        return stripped if stripped != value else None
    if rule == "delete_char":
        positions = [i for i, ch in enumerate(value) if not ch.isspace()]
        if not positions:
            return None
        i = positions[int(rng.integers(len(positions)))]
        return value[:i] + value[i + 1 :]
    if rule == "substitute_adjacent_key":
        positions = [i for i, ch in enumerate(value) if fold_diacritics(ch).lower() in _ADJACENT]
        if not positions:
            return None
        i = positions[int(rng.integers(len(positions)))]
        base = fold_diacritics(value[i]).lower()
        near = _ADJACENT[base]
        repl = near[int(rng.integers(len(near)))]
        return value[:i] + repl + value[i + 1 :]
    if rule == "transpose_adjacent":
        positions = [
            i
            for i in range(len(value) - 1)
            if not value[i].isspace()
            and not value[i + 1].isspace()
            and value[i] != value[i + 1]
        ]
        if not positions:
            return None
        i = positions[int(rng.integers(len(positions)))]
        return value[:i] + value[i + 1] + value[i] + value[i + 2 :]
    # drop_final_consonant
    words = value.split(" ")
    candidates = [
        w
        for w, word in enumerate(words)
        if word and fold_diacritics(word[-1]).lower() not in _VOWELS and word[-1].isalpha()
    ]
    if not candidates:
        return None
    w = candidates[int(rng.integers(len(candidates)))]
    words[w] = words[w][:-1]
    out = " ".join(words)
    return out if out.strip() else None


def generate_corruptions(value: str, spec: CorruptionSpec) -> list[str]:
    """Seeded, deterministic list of distinct corrupted variants.

    The full diacritic-stripped form always comes first when the rule is
    enabled and actually changes the value.
    """
    if not value:
        raise ValidationError("cannot corrupt an empty value")
    rng = _value_rng(spec.seed, value)
    out: list[str] = []
    seen = {value}
    if "strip_diacritics" in spec.rules:
        stripped = fold_diacritics(value)
        if stripped not in seen:
            out.append(stripped)
            seen.add(stripped)
    attempts = 0
    max_attempts = 30 * spec.variants_per_value
    while len(out) < spec.variants_per_value and attempts < max_attempts:
        attempts += 1
        rule = spec.rules[int(rng.integers(len(spec.rules)))]
        variant = _apply_rule(rule, value, rng)
        if variant and variant not in seen:
            out.append(variant)
            seen.add(variant)
    return out


@dataclass(frozen=True)
class KnnIndex:
    points: tuple[tuple[FeatureVector, str], ...]  # (char vector, canonical value)
    k: int = 17
    reject_radius: float = 3.0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if self.k > len(self.points):
            raise ValidationError(
                f"k={self.k} exceeds index size {len(self.points)}"
            )
        if self.reject_radius <= 0:
            raise ValidationError("reject_radius must be positive")


def build_index(
    lexicon: EntityLexicon,
    spec: CorruptionSpec | None = None,
    k: int = 17,
    reject_radius: float = 3.0,
) -> KnnIndex:
    """Index the canonical values plus their generated corruptions, each
    labeled with its canonical value."""
    spec = spec or CorruptionSpec()
    points: list[tuple[FeatureVector, str]] = []
    for value in lexicon.values():
        points.append((char_vector(value), value))
        for variant in generate_corruptions(value, spec):
            points.append((char_vector(variant), value))
    return KnnIndex(points=tuple(points), k=k, reject_radius=reject_radius)


_EDGE_PUNCT = re.compile(r"^[\s" + re.escape(string.punctuation) + r"]+|[\s" + re.escape(string.punctuation) + r"]+$")


def regex_normalize(surface: str) -> str:
    """Lowercase, collapse whitespace, strip edge whitespace/punctuation.
    Idempotent."""
    out = surface.lower()
    out = _EDGE_PUNCT.sub("", out)
    out = re.sub(r"\s+", " ", out)
    return out


def _distance(a: FeatureVector, b: FeatureVector) -> float:
    total = 0.0
    for key, value in a.items():
        diff = value - b.get(key, 0.0)
        total += diff * diff
    for key, value in b.items():
        if key not in a:
            total += value * value
    return math.sqrt(total)


@dataclass(frozen=True)
class NormalizationResult:
    value: str  # canonical value when matched, the raw surface otherwise
    matched: bool
    distance: float  # nearest in-vote distance; 0.0 for exact canonical hits
    mean_distance: float

    @classmethod
    def no_match(cls, surface: str) -> "NormalizationResult":
        return cls(value=surface, matched=False, distance=math.inf, mean_distance=math.inf)


def normalize_entity(index: KnnIndex, surface: str, k: int | None = None) -> NormalizationResult:
    """Majority label among the k nearest points wins; ties break toward the
    smaller mean distance, then the lexicographically smaller label. A query
    whose nearest point is beyond reject_radius is kept raw and flagged."""
    query = regex_normalize(surface)
    if not query:
        return NormalizationResult.no_match(surface)
    k = index.k if k is None else k
    if k > len(index.points):
        raise ValidationError(f"k={k} exceeds index size {len(index.points)}")
    vec = char_vector(query)
    distances = [
        (_distance(vec, point), order, label)
        for order, (point, label) in enumerate(index.points)
    ]
    distances.sort(key=lambda item: (item[0], item[1]))
    nearest = distances[:k]
    if nearest[0][0] > index.reject_radius:
        return NormalizationResult.no_match(surface)
    tally: dict[str, list[float]] = {}
    for dist, _, label in nearest:
        tally.setdefault(label, []).append(dist)
    winner = min(
        tally.items(),
        key=lambda item: (-len(item[1]), sum(item[1]) / len(item[1]), item[0]),
    )
    label, dists = winner
    return NormalizationResult(
        value=label,
        matched=True,
        distance=min(dists),
        mean_distance=sum(dists) / len(dists),
    )


@dataclass(frozen=True)
class KSweepRow:
    k: int
    accuracy: float  # percent


@dataclass(frozen=True)
class KSweepReport:
    rows: tuple[KSweepRow, ...]
    best_k: int


def k_sweep(
    index: KnnIndex,
    eval_set: list[tuple[str, str]],
    ks: tuple[int, ...] = DEFAULT_KS,
) -> KSweepReport:
    """Accuracy of normalization over (corrupted surface, expected canonical)
    pairs for each k. Best k is the argmax row (ties to the smaller k)."""
    if not eval_set:
        raise TrainingError("k sweep needs a non-empty evaluation set")
    for k in ks:
        if k > len(index.points):
            raise ValidationError(f"k={k} exceeds index size {len(index.points)}")
    rows: list[KSweepRow] = []
    for k in ks:
        correct = sum(
            1
            for surface, expected in eval_set
            if normalize_entity(index, surface, k=k).value == expected
        )
        rows.append(KSweepRow(k=k, accuracy=100.0 * correct / len(eval_set)))
    best = max(rows, key=lambda row: (row.accuracy, -row.k))
    return KSweepReport(rows=tuple(rows), best_k=best.k)
