"""Tokenization, embeddings, BILOU tag codec, and feature extraction.

Feature vectors are sparse maps ``feature_id -> value`` with no zero-valued
entries, shared between the CRF emissions and the kNN character space.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .corpus import AnnotatedUtterance, EntitySpan, byte_slice
from .errors import AlignmentError, ParseError

FeatureVector = dict[str, float]

O_TAG = "O"

_TOKEN = re.compile(r"\S+")


@dataclass(frozen=True)
class Token:
    surface: str
    start: int  # byte offset into the original text
    end: int


def tokenize(text: str) -> list[Token]:
    """Split on whitespace; offsets are byte offsets into the original text."""
    byte_of = [0]
    for ch in text:
        byte_of.append(byte_of[-1] + len(ch.encode("utf-8")))
    return [
        Token(m.group(), byte_of[m.start()], byte_of[m.end()])
        for m in _TOKEN.finditer(text)
    ]


def fold_diacritics(text: str) -> str:
    """Map accented characters to their base forms (Vietnamese-safe)."""
    text = text.replace("đ", "d").replace("Đ", "D")
    decomposed = unicodedata.normalize("NFD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


# --- Embeddings ---------------------------------------------------------------


@dataclass
class EmbeddingTable:
    """Word-vector lookup with a deterministic hash fallback for OOV words.

    The fallback draws a pseudo-random unit vector from a generator seeded
    by a digest of ``(fallback_seed, word)``, so the same word always maps
    to the same vector across processes.
    """

    dimension: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    fallback_seed: int = 0

    def __post_init__(self):
        for word, vec in self.vectors.items():
            if vec.shape != (self.dimension,):
                raise ValueError(f"vector for {word!r} has wrong dimension")

    def vector(self, word: str) -> np.ndarray:
        stored = self.vectors.get(word)
        if stored is not None:
            return stored
        return self._fallback(word)

    def _fallback(self, word: str) -> np.ndarray:
        # Hash the folded lowercase form so diacritic-stripped input lands on
        # the same vector as the canonical spelling.
        canonical = fold_diacritics(word.lower())
        digest = hashlib.blake2b(
            f"{self.fallback_seed}:{canonical}".encode("utf-8"), digest_size=8
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.standard_normal(self.dimension)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


def load_embeddings(path: str, dimension: int | None = None, fallback_seed: int = 0) -> EmbeddingTable:
    """Load a word-vector text file: optional ``<count> <D>`` header, then
    ``word v1 ... vD`` lines."""
    vectors: dict[str, np.ndarray] = {}
    dim = dimension
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, 1):
            parts = raw.rstrip("\n").split(" ")
            if line_no == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    dim = int(parts[1])
                    continue
                except ValueError:
                    pass
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"bad embedding line for {word!r}", line_no) from exc
            if dim is None:
                dim = vec.shape[0]
            if vec.shape[0] != dim:
                raise ParseError(
                    f"embedding for {word!r} has {vec.shape[0]} dims, expected {dim}",
                    line_no,
                )
            vectors[word] = vec
    if dim is None:
        raise ParseError("embedding file contains no vectors", 1)
    return EmbeddingTable(dimension=dim, vectors=vectors, fallback_seed=fallback_seed)


def sentence_vector(tokens: list[Token], table: EmbeddingTable) -> np.ndarray:
    """Unweighted mean of per-token vectors; empty input gives the zero vector."""
    if not tokens:
        return np.zeros(table.dimension)
    stacked = np.stack([table.vector(t.surface) for t in tokens])
    return stacked.mean(axis=0)


# --- BILOU codec --------------------------------------------------------------


def bilou_tag(role: str, entity_name: str) -> str:
    return f"{role}-{entity_name}"


def split_bilou(tag: str) -> tuple[str, str | None]:
    if tag == O_TAG:
        return O_TAG, None
    role, _, entity = tag.partition("-")
    return role, entity


def bilou_encode(utt: AnnotatedUtterance) -> list[tuple[Token, str]]:
    """Tag each token: U for single-token entities, B/I.../L for longer ones.

    Raises AlignmentError when a span does not start and end on token
    boundaries.
    """
    tokens = tokenize(utt.text)
    starts = {t.start: i for i, t in enumerate(tokens)}
    ends = {t.end: i for i, t in enumerate(tokens)}
    tags = [O_TAG] * len(tokens)
    for span in utt.spans:
        if span.start not in starts or span.end not in ends:
            raise AlignmentError(
                f"span {span.value!r} [{span.start}:{span.end}] does not align "
                f"with token boundaries in {utt.text!r}"
            )
        first, last = starts[span.start], ends[span.end]
        if first == last:
            tags[first] = bilou_tag("U", span.entity_name)
        else:
            tags[first] = bilou_tag("B", span.entity_name)
            for i in range(first + 1, last):
                tags[i] = bilou_tag("I", span.entity_name)
            tags[last] = bilou_tag("L", span.entity_name)
    return list(zip(tokens, tags))


def bilou_runs(tags: list[str]) -> list[tuple[int, int, str]]:
    """Token-index runs ``(first, last, entity)`` decoded from a tag
    sequence, repairing invalid fragments.

    An I or L without a preceding B starts a new entity at that token; an
    unterminated B...I run is closed at the last in-run token. Decoding is
    total: any tag sequence yields a valid run list.
    """
    runs: list[tuple[int, int, str]] = []
    run_entity: str | None = None
    run_first = 0

    def close(last: int):
        nonlocal run_entity
        if run_entity is not None:
            runs.append((run_first, last, run_entity))
            run_entity = None

    for i, tag in enumerate(tags):
        role, entity = split_bilou(tag)
        if role == O_TAG:
            close(i - 1)
        elif role == "U":
            close(i - 1)
            run_entity, run_first = entity, i
            close(i)
        elif role == "B":
            close(i - 1)
            run_entity, run_first = entity, i
        elif role in ("I", "L"):
            if run_entity != entity:
                close(i - 1)
                run_entity, run_first = entity, i
            if role == "L":
                close(i)
    close(len(tags) - 1)
    return runs


def bilou_decode(
    tags: list[str], tokens: list[Token], text: str | None = None
) -> list[EntitySpan]:
    """Decode a tag sequence into spans (see bilou_runs for the repair
    rules). Span values come from the original text when provided,
    otherwise from token surfaces joined with single spaces."""
    spans: list[EntitySpan] = []
    for first, last, entity in bilou_runs(tags):
        start = tokens[first].start
        end = tokens[last].end
        if text is not None:
            value = byte_slice(text, start, end)
        else:
            value = " ".join(t.surface for t in tokens[first : last + 1])
        spans.append(EntitySpan(start, end, value, entity))
    return spans


# --- CRF feature template -----------------------------------------------------


def crf_features(tokens: list[Token], i: int) -> FeatureVector:
    """Binary features for position i: identity, lowercase, short affixes,
    digit flag, +/-1 window identities, and sentence-boundary markers.

    Everything except the raw identity is computed on the diacritic-folded
    lowercase form, so input typed without diacritics still lights up the
    same features as the canonical spelling."""
    surface = tokens[i].surface
    folded = fold_diacritics(surface.lower())
    feats: FeatureVector = {
        f"word={surface}": 1.0,
        f"lower={folded}": 1.0,
    }
    for k in (1, 2, 3):
        if len(folded) >= k:
            feats[f"prefix{k}={folded[:k]}"] = 1.0
            feats[f"suffix{k}={folded[-k:]}"] = 1.0
    if surface.isdigit():
        feats["is_digit"] = 1.0
    if i == 0:
        feats["BOS"] = 1.0
    else:
        feats[f"prev={fold_diacritics(tokens[i - 1].surface.lower())}"] = 1.0
    if i == len(tokens) - 1:
        feats["EOS"] = 1.0
    else:
        feats[f"next={fold_diacritics(tokens[i + 1].surface.lower())}"] = 1.0
    return feats


# --- Character vectors for the kNN normalizer ---------------------------------


def char_vector(surface: str) -> FeatureVector:
    """Character unigram+bigram counts over the lowercased, diacritic-folded
    surface. Used as the kNN feature space."""
    if not surface:
        raise ValueError("char_vector requires a non-empty string")
    folded = fold_diacritics(surface.lower())
    counts: FeatureVector = {}
    for ch in folded:
        counts[ch] = counts.get(ch, 0.0) + 1.0
    for a, b in zip(folded, folded[1:]):
        gram = a + b
        counts[gram] = counts.get(gram, 0.0) + 1.0
    return counts
