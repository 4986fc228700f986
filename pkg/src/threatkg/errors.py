"""Exception hierarchy shared across the pipeline.

Exit codes used by the CLI: 0 ok, 2 usage (click), 3 data error,
4 model error, 5 I/O error.
"""

from __future__ import annotations


class ThreatKgError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataError(ThreatKgError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class ParseError(DataError):
    """A line-oriented input failed to parse; carries the line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class SchemaError(DataError):
    """An ontology or label-space definition is invalid."""


class UnknownLabelError(SchemaError):
    """A relation label is not defined by the active ontology schema."""


class MissingEmbeddingError(DataError):
    """A precomputed embedding record was not found for a sentence."""

    def __init__(self, doc_id: str, sentence_id: int, detail: str = "no record"):
        super().__init__(f"missing embedding for ({doc_id!r}, {sentence_id}): {detail}")
        self.doc_id = doc_id
        self.sentence_id = sentence_id


class NotFoundError(DataError):
    """A graph node or other keyed entity does not exist."""


class ModelError(ThreatKgError):
    """A model-side failure (shapes, contracts, inference)."""

    exit_code = 4


class ShapeError(ModelError):
    """Tensor dimensions do not match the declared contract."""


class ContractError(ModelError):
    """An API precondition was violated (stale cache, bad index, ...)."""


class InfeasiblePathError(ModelError):
    """No unmasked label path exists from START to STOP."""


class TrainingDivergedError(ModelError):
    """The training loss became non-finite."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class StorageError(ThreatKgError):
    """An I/O failure while reading or writing artifact files."""

    exit_code = 5


class PipelineStageError(ThreatKgError):
    """A pipeline stage failed; carries the stage name and the cause's
    exit code."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
