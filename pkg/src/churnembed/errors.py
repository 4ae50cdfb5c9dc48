"""Exception types shared across the package."""


class ChurnEmbedError(Exception):
    """Base class for all package errors."""


class DayRangeError(ChurnEmbedError, ValueError):
    """A day index falls outside the observed series range."""


class ContractError(ChurnEmbedError, ValueError):
    """An operation was called outside its documented precondition."""


class DimensionError(ChurnEmbedError, ValueError):
    """Vector or matrix shapes do not line up."""


class NotFoundError(ChurnEmbedError, LookupError):
    """A requested item does not exist (edge, vocabulary entry, ...)."""


class VocabularyError(ChurnEmbedError, ValueError):
    """Context vocabulary is unusable (too small, bad id)."""


class EmptyDatasetError(ChurnEmbedError, ValueError):
    """No usable training examples could be produced."""


class SplitError(ChurnEmbedError, ValueError):
    """A chronological split cannot be formed."""


class MetricUndefinedError(ChurnEmbedError, ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class SingleClassError(ChurnEmbedError, ValueError):
    """A fit requires both classes but only one is present."""


class DivergenceError(ChurnEmbedError, RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(ChurnEmbedError, ValueError):
    """A configuration value is missing, malformed, or infeasible."""
