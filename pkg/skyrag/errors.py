"""
Exception hierarchy shared by every skyrag module.
python_file: errors.py
"""


class SkyragError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SkyragError):
    """A configuration value is missing, malformed, or out of range."""

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"invalid configuration field: {field}")


class ZeroVectorError(SkyragError):
    """A vector with no direction cannot be normalized."""


class MissingEmbeddingError(SkyragError, KeyError):
    """A fixture provider has no vector for the requested item."""


class EmptyArchiveError(SkyragError):
    """Retrieval was attempted on an archive with nothing in it."""


class UnknownImageError(SkyragError, KeyError):
    """An image id is not resident in the archive."""


class EmptyGenerationError(SkyragError):
    """Confidence is undefined for an output with no generated tokens."""


class MissingTraceError(SkyragError, KeyError):
    """The trace table has no entry for the query."""


class DuplicateQueryError(SkyragError):
    """A query is already waiting in the transmission buffer."""


class UnknownIdError(SkyragError, KeyError):
    """A missing-record request named an id that was never advertised."""


class ScheduleParseError(SkyragError):
    """A contact-window schedule line could not be parsed."""


class OverlapError(SkyragError):
    """Contact windows overlap or are out of order."""


class CorpusParseError(SkyragError):
    """An archive corpus, trace table, or fixture line could not be parsed."""


class InvariantViolation(SkyragError):
    """An internal invariant failed during a run."""
