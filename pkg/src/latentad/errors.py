"""Exception hierarchy shared by every module."""


class LatentADError(Exception):
    """Base class for errors raised by :mod:`latentad`."""


class InvalidInputError(LatentADError, ValueError):
    """Data handed to an estimator or parser is unusable."""


class SchemaError(InvalidInputError):
    """A mapped column is absent from a CSV header, or unit ids repeat."""


class ConfigurationError(LatentADError, ValueError):
    """A numeric setting or a combination of settings is invalid."""


class InvalidStateError(LatentADError, RuntimeError):
    """An operation needs characteristic-function arrays that were not computed."""


class NumericalError(LatentADError, ArithmeticError):
    """A computation produced a degenerate or non-finite result."""


class DegenerateVarianceError(NumericalError):
    """The estimated asymptotic variance is zero, so no z-statistic exists."""


class SimulationError(NumericalError):
    """Too many Monte Carlo replications failed."""
