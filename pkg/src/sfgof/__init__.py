"""Goodness-of-fit tests for normal/gamma and stable/gamma stochastic frontier models."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    DataError,
    EstimationError,
    NumericalError,
    NumericalOverflow,
    SfgofError,
)
from .models import (  # noqa: E402
    MixtureErrors,
    NormalGammaParams,
    RegressionModel,
    Sample,
    StableGammaParams,
    StudentTGammaParams,
    sample_errors,
)

__all__ = [
    "__version__",
    "ConfigurationError",
    "DataError",
    "EstimationError",
    "NumericalError",
    "NumericalOverflow",
    "SfgofError",
    "MixtureErrors",
    "NormalGammaParams",
    "RegressionModel",
    "Sample",
    "StableGammaParams",
    "StudentTGammaParams",
    "sample_errors",
]
