"""Exception hierarchy shared by all sfgof modules."""


class SfgofError(Exception):
    """Base class for every error raised by sfgof."""


class ConfigurationError(SfgofError, ValueError):
    """Invalid parameters or configuration, detected before any numerics run."""


class NumericalError(SfgofError, ArithmeticError):
    """A computation could not be carried out to the requested accuracy."""


class NumericalOverflow(NumericalError):
    """An intermediate quantity exceeds the representable floating-point range."""


class EstimationError(NumericalError):
    """Parameter estimation has no admissible solution for the given sample."""


class DataError(SfgofError, ValueError):
    """Malformed input data (CSV parse failures, missing or non-numeric cells)."""
