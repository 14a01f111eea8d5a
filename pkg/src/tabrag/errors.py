"""Exception hierarchy shared across the pipeline stages.

Every error raised on purpose by this package derives from :class:`TabragError`
so callers (and the CLI) can map failures to stable exit codes by class.
"""

from __future__ import annotations


class TabragError(Exception):
    """Base class for all errors raised by this package."""


# --- ingestion / document model -------------------------------------------

class SchemaViolation(TabragError):
    """An input document does not match the ingestion schema."""


class OverlappingSpans(TabragError):
    """Two cell spans claim the same grid position during normalization."""


# --- corpus assembly -------------------------------------------------------

class MissingDemonstration(TabragError):
    """A generation prompt was requested without its in-context example."""


class CorpusBuildError(TabragError):
    """Backend failures interrupted corpus assembly.

    Carries the passages completed so far plus the (doc_id, block_id) pairs
    that failed, so a re-run can resume instead of regenerating everything.
    """

    def __init__(self, message, completed=None, failed=None):
        super().__init__(message)
        self.completed = list(completed or [])
        self.failed = list(failed or [])


# --- backends --------------------------------------------------------------

class BackendUnavailable(TabragError):
    """The generation or embedding endpoint could not serve the request."""


class BackendRefusal(TabragError):
    """The endpoint answered, but with an error payload instead of a result."""


class DimensionMismatch(TabragError):
    """An embedding does not have the configured dimensionality."""


# --- storage ---------------------------------------------------------------

class CorruptRecord(TabragError):
    """A persisted record failed validation on load (message carries the line)."""


class IoFailure(TabragError):
    """An underlying read or write failed."""


# --- retrieval -------------------------------------------------------------

class DuplicateId(TabragError):
    """Two chunks with the same id were offered to one index."""


class UnknownChunkId(TabragError):
    """A chunk id was requested that the index does not contain."""


class EmptyIndex(TabragError):
    """A search or answer was attempted against an index with no entries."""


# --- qa --------------------------------------------------------------------

class MissingAnswer(TabragError):
    """An instruction record was requested for a question without a golden answer."""


# --- evaluation ------------------------------------------------------------

class MalformedReply(TabragError):
    """An evaluator reply contains no recognizable score pattern."""


class MissingLabel(TabragError):
    """An evaluator reply scores some candidates but not all four."""


class OutOfRange(TabragError):
    """A parsed score lies outside the 0..5 scale."""


class IncompleteSheet(TabragError):
    """A score sheet is missing scores for some (question, candidate) pair."""


class TooFewStrategies(TabragError):
    """A spread statistic needs at least two per-strategy values."""


class LengthMismatch(TabragError):
    """Two paired score lists have different lengths."""


class WrongEvaluatorCount(TabragError):
    """The reliability rule is defined for exactly three evaluators."""


# --- pipeline / cli --------------------------------------------------------

class MissingUpstreamArtifact(TabragError):
    """A stage input produced by an earlier command is absent."""
