"""Exception hierarchy shared across the engine."""


class ChatctlError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ChatctlError):
    """A training file could not be parsed. Carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ChatctlError):
    """Parsed data violates a cross-file consistency rule."""


class AlignmentError(ChatctlError):
    """An entity span does not align with token boundaries."""


class TrainingError(ChatctlError):
    """A model cannot be trained on the given data."""


class EngineError(ChatctlError):
    """The conversation engine was driven with inconsistent state or models."""


class BundleError(ChatctlError):
    """A model bundle on disk is missing, corrupt, or mismatched."""
