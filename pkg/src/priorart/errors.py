"""Exception types shared across the package."""


class PriorArtError(Exception):
    """Base class for all package-specific errors."""


class ParseError(PriorArtError):
    """Raised on malformed corpus records.

    ``offset`` is the byte offset of the problem, relative to the start of
    the line when raised by the record parser and absolute within the file
    when re-raised by the corpus loader.
    """

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.message = message
        self.offset = offset


class ConfigError(PriorArtError):
    """Invalid configuration value or analyzer/parameter selection."""


class EmptyQueryError(PriorArtError):
    """A retrieval model was asked to score an empty query."""


class FitError(PriorArtError):
    """Regression fitting failed (bad shapes, singular system, bad grid)."""


class EvalError(PriorArtError):
    """Evaluation asked for with unusable inputs (e.g. empty qrels)."""
