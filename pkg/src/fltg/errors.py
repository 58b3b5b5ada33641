"""Exception hierarchy shared by every module."""


class FLTGError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(FLTGError, ValueError):
    """Vectors that must share a length do not."""


class DegenerateVectorError(FLTGError, ValueError):
    """A zero-norm vector reached an operation that needs a direction."""


class EmptyAggregateError(FLTGError):
    """An aggregation rule had nothing to aggregate.

    ``reason`` distinguishes the cases so callers can log them:
    ``"empty_input"``, ``"all_filtered"``, ``"zero_scores"`` or
    ``"degenerate_server"`` (zero-norm server update).
    """

    def __init__(self, message: str, reason: str = "empty_input"):
        super().__init__(message)
        self.reason = reason


class ConfigError(FLTGError, ValueError):
    """Invalid configuration or violated precondition on rule parameters.

    ``key`` names the offending configuration key when known.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class FormatError(FLTGError, ValueError):
    """A file does not follow the expected binary layout."""


class ConsistencyError(FLTGError, ValueError):
    """Two inputs that must agree (e.g. image and label counts) do not."""


class SamplingExhaustedError(FLTGError, ValueError):
    """Not enough examples of a class to sample without replacement."""


class DegenerateAttackError(FLTGError, ValueError):
    """An attack's perturbation direction is undefined."""
