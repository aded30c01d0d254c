"""Exception hierarchy shared across the package."""


class SpmlLabError(Exception):
    """Base class for all spml-lab errors."""


class ConfigurationError(SpmlLabError):
    """Invalid configuration value or combination."""


class DataError(SpmlLabError):
    """Malformed dataset content (bad shapes, bad label values, bad files)."""


class ContractError(SpmlLabError):
    """An operation was called with inputs outside its declared alphabet."""


class StateError(SpmlLabError):
    """Internal bookkeeping violated (missing soft label, empty ledger, ...)."""


class SequencingError(SpmlLabError):
    """An operation was invoked at the wrong point of the training schedule."""


class NumericError(SpmlLabError):
    """Non-finite or out-of-domain numeric input."""


class DivergenceError(SpmlLabError):
    """Training produced a non-finite loss and was aborted."""


class MetricError(SpmlLabError):
    """A metric is undefined for the given input (e.g. no positive labels)."""
