"""Closed-domain retrieval chatbot engine.

Training files (intents, response templates, stories) feed four models: a
kernel SVM intent classifier, a linear-chain CRF entity extractor, a kNN
typo normalizer over character vectors, and an LSTM next-action policy.
The trained engine serves conversations over a CLI shell and an HTTP API.
"""

__version__ = "0.1.0"

from .corpus import (
    AnnotatedUtterance,
    DomainSpec,
    EntitySpan,
    IntentDef,
    ResponseTemplate,
    Story,
    build_domain,
    parse_nlu,
    parse_stories,
    parse_templates,
)
from .engine import BotResponse, DialogueEngine, KnowledgeBase
from .errors import (
    AlignmentError,
    BundleError,
    ChatctlError,
    EngineError,
    ParseError,
    TrainingError,
    ValidationError,
)
from .tracker import ConversationTracker

__all__ = [
    "AnnotatedUtterance",
    "DomainSpec",
    "EntitySpan",
    "IntentDef",
    "ResponseTemplate",
    "Story",
    "build_domain",
    "parse_nlu",
    "parse_stories",
    "parse_templates",
    "BotResponse",
    "DialogueEngine",
    "KnowledgeBase",
    "ConversationTracker",
    "AlignmentError",
    "BundleError",
    "ChatctlError",
    "EngineError",
    "ParseError",
    "TrainingError",
    "ValidationError",
    "__version__",
]
