"""Exception vocabulary shared across the engine."""


class ScoutlabError(Exception):
    """Base class for every engine-raised error."""


# --- findings memory ---------------------------------------------------------

class DuplicateId(ScoutlabError):
    """A record or evidence entry with this id already exists."""


class InvariantViolation(ScoutlabError):
    """A domain-type invariant does not hold (bounds, stage/evidence rules)."""


class StorageFailure(ScoutlabError):
    """The record log could not be written or flushed."""


class UnknownId(ScoutlabError):
    """No record with the given id."""


class IllegalTransition(ScoutlabError):
    """Stage change is not exactly one step forward (skip, regress, repeat)."""


class MissingJustification(ScoutlabError):
    """Promotion to Progress requires an Improvement evaluation as justification."""


class GateDenied(ScoutlabError):
    """The human supervisor rejected the promotion."""


class EmbeddingMissing(ScoutlabError):
    """Cosine retrieval selected but the query or a record has no embedding."""


class ConflictingImmutableField(ScoutlabError):
    """Two replicas disagree on an immutable field for the same id; merge aborted."""


class SchemaVersionMismatch(ScoutlabError):
    """The log declares a schema version this build does not understand."""


class CorruptLine(ScoutlabError):
    """A log line could not be parsed or applied."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


# --- acquisition -------------------------------------------------------------

class EmptyBatch(ScoutlabError):
    """Selection over an empty candidate batch."""


class StageViolation(ScoutlabError):
    """A selection batch contains a record that is not at the Idea stage."""


# --- generation --------------------------------------------------------------

class BackendUnavailable(ScoutlabError):
    """The external backend stayed unreachable after bounded retries."""


class EmptyGeneration(ScoutlabError):
    """The backend returned no usable drafts."""


# --- evaluation harness ------------------------------------------------------

class MissingLatentPoint(ScoutlabError):
    """Synthetic evaluation requires the finding to carry a latent point."""


# --- orchestrator ------------------------------------------------------------

class BudgetExhausted(ScoutlabError):
    """The charge would exceed a hard budget limit; the operation was refused."""


class ConfigInvalid(ScoutlabError):
    """Campaign configuration failed validation."""


class NotPending(ScoutlabError):
    """The finding is not parked in the approval queue."""


class AlreadyResolved(ScoutlabError):
    """This approval item was already decided."""


# --- analysis ----------------------------------------------------------------

class CorruptLog(ScoutlabError):
    """The campaign log could not be parsed."""


class InsufficientGroups(ScoutlabError):
    """A scaling curve needs at least two worker-count groups."""


class UnknownFormat(ScoutlabError):
    """Unrecognized export format name."""
