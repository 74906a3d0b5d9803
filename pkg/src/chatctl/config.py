"""Pipeline configuration: a flat key-value file (TOML-compatible subset).

Values may be quoted strings, integers, floats, booleans, or flat arrays.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .errors import ParseError, ValidationError
from .knn import CORRUPTION_RULES

Scalar = str | int | float | bool


@dataclass
class PipelineConfig:
    nlu_path: str = "nlu.md"
    templates_path: str = "templates.yml"
    stories_path: str = "stories.md"
    lexicon_path: str | None = None  # None derives the lexicon from NLU spans
    knowledge_path: str | None = None
    embeddings_path: str | None = None
    embedding_dim: int = 50

    svm_kernel: str = "rbf"
    svm_c_grid: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0, 20.0, 100.0)
    svm_gamma: float | None = None  # None resolves to 1/dimension
    svm_degree: int = 3
    svm_coef0: float = 0.0
    svm_folds: int = 5

    crf_l1: float = 0.1
    crf_l2: float = 0.1
    crf_max_iterations: int = 50

    knn_k: int = 17
    knn_reject_radius: float = 3.0
    knn_variants_per_value: int = 6
    knn_rules: tuple[str, ...] = CORRUPTION_RULES

    policy_hidden: int = 32
    policy_max_history: int = 5
    policy_epochs: int = 500
    policy_learning_rate: float = 0.05

    seed: int = 1
    confidence_threshold: float = 0.3
    fallback_action: str = "utter_fallback"
    fallback_text: str = "Xin lỗi, mình chưa hiểu ý bạn."
    kb_missing_text: str = "Xin lỗi, mình chưa có thông tin về mục này."
    custom_action_slots: dict[str, str] = field(default_factory=dict)
    eval_folds: int = 10

    def to_dict(self) -> dict:
        out = {}
        for spec in fields(self):
            value = getattr(self, spec.name)
            if isinstance(value, tuple):
                value = list(value)
            out[spec.name] = value
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        kwargs = {}
        for spec in fields(cls):
            if spec.name not in payload:
                continue
            value = payload[spec.name]
            if isinstance(value, list):
                value = tuple(value)
            kwargs[spec.name] = value
        return cls(**kwargs)


_PATH_KEYS = (
    "nlu_path",
    "templates_path",
    "stories_path",
    "lexicon_path",
    "knowledge_path",
    "embeddings_path",
)


def _parse_scalar(text: str, line_no: int) -> Scalar:
    text = text.strip()
    if text.startswith('"'):
        end = text.find('"', 1)
        if end < 0:
            raise ParseError("unterminated string", line_no)
        rest = text[end + 1 :].strip()
        if rest and not rest.startswith("#"):
            raise ParseError(f"trailing characters after string: {rest!r}", line_no)
        return text[1:end]
    bare = text.split("#", 1)[0].strip()
    if bare in ("true", "false"):
        return bare == "true"
    try:
        return int(bare)
    except ValueError:
        pass
    try:
        return float(bare)
    except ValueError as exc:
        raise ParseError(f"cannot parse value {bare!r}", line_no) from exc


def _parse_value(text: str, line_no: int):
    text = text.strip()
    if text.startswith("["):
        end = text.rfind("]")
        if end < 0:
            raise ParseError("unterminated array", line_no)
        inner = text[1:end].strip()
        if not inner:
            return []
        items = []
        depth_free: list[str] = []
        in_string = False
        piece = ""
        for ch in inner:
            if ch == '"':
                in_string = not in_string
                piece += ch
            elif ch == "," and not in_string:
                depth_free.append(piece)
                piece = ""
            else:
                piece += ch
        depth_free.append(piece)
        for raw in depth_free:
            items.append(_parse_scalar(raw, line_no))
        return items
    return _parse_scalar(text, line_no)


def parse_config_text(source: str) -> dict:
    values: dict = {}
    for line_no, raw in enumerate(source.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", line_no)
        key, _, rest = line.partition("=")
        key = key.strip()
        if not key:
            raise ParseError("empty key", line_no)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", line_no)
        values[key] = _parse_value(rest, line_no)
    return values


def load_config(path: str) -> PipelineConfig:
    with open(path, encoding="utf-8") as handle:
        values = parse_config_text(handle.read())

    known = {spec.name for spec in fields(PipelineConfig)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ValidationError(f"unknown config key {key!r}")
        if key == "custom_action_slots":
            mapping = {}
            for item in value:
                if not isinstance(item, str) or ":" not in item:
                    raise ValidationError(
                        "custom_action_slots entries must look like 'action:slot'"
                    )
                action, _, slot = item.partition(":")
                mapping[action.strip()] = slot.strip()
            kwargs[key] = mapping
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value

    config = PipelineConfig(**kwargs)
    base = os.path.dirname(os.path.abspath(path))
    for key in _PATH_KEYS:
        value = getattr(config, key)
        if value is not None and not os.path.isabs(value):
            setattr(config, key, os.path.join(base, value))

    if config.svm_c_grid and any(c <= 0 for c in config.svm_c_grid):
        raise ValidationError("C grid values must be positive")
    if config.knn_k < 1:
        raise ValidationError("knn_k must be at least 1")
    if config.policy_max_history < 1:
        raise ValidationError("policy_max_history must be at least 1")
    return config
