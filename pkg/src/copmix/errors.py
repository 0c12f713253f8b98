"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class CopmixError(Exception):
    """Base class for all package errors."""


class ParameterError(CopmixError, ValueError):
    """Distribution or matrix parameters outside their valid domain."""


class DomainError(CopmixError, ValueError):
    """Function argument outside the mathematical domain (e.g. probit at 0)."""


class MatrixError(CopmixError, ValueError):
    """Matrix fails a structural requirement (symmetry, positive definiteness)."""


class DegenerateDataError(CopmixError, ValueError):
    """Data insufficient for the requested statistic (n < 2, constant column)."""


class NearSingularError(DegenerateDataError):
    """Estimated matrix is numerically singular; callers may treat as MH rejection."""


class ConfigError(CopmixError):
    """Invalid experiment configuration."""


class DataError(CopmixError):
    """Dataset file malformed or inconsistent with the declared layout."""


class NumericalError(CopmixError):
    """Unrecoverable numerical failure during inference."""
