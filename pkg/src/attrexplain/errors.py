class AttrExplainError(Exception):
    """Base class for toolkit errors."""


class ValidationError(AttrExplainError, ValueError):
    pass


class ParseError(ValidationError):
    pass


class SplitError(ValidationError):
    pass


class ExplanationError(AttrExplainError):
    """No attributes (or no liked items) to explain."""


class TrainingError(AttrExplainError, RuntimeError):
    """Training diverged (non-finite loss)."""


class StaleArtifactError(AttrExplainError):
    """An upstream stage artifact is missing or was built from a different config."""
