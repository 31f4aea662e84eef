"""Exception types shared across the pipeline stages."""


class RelclusterError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(RelclusterError):
    """Malformed corpus input: bad JSON, bad spans, duplicate ids."""


class SchemaError(RelclusterError):
    """An external file does not match its documented schema."""


class MiningError(RelclusterError):
    """Pair mining failed, e.g. an NLI adapter could not answer a query."""


class ConfigurationError(RelclusterError):
    """Inconsistent or unsatisfiable run configuration."""


class ZeroVectorError(RelclusterError):
    """A cosine-distance operand had zero norm."""


class ShapeError(RelclusterError):
    """Mismatched array shapes or label-sequence lengths."""


class BatchConstructionError(RelclusterError):
    """A training batch offered no eligible negative for some anchor."""


class TrainingError(RelclusterError):
    """Training aborted; carries diagnostics about the offending step."""


class EvaluationError(RelclusterError):
    """Evaluation requested on sentences without gold labels."""


class StageDependencyError(RelclusterError):
    """A CLI stage was invoked before the artifacts it needs exist."""


class StageError(RelclusterError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
