"""Exception types raised across the package."""


class RobustSelError(Exception):
    """Base class for all package errors."""


class ContractViolation(RobustSelError, ValueError):
    """An argument breaks an operation's preconditions (shapes, ranges)."""


class DataError(RobustSelError, ValueError):
    """Malformed or incomplete input data (ingestion, config)."""


class NumericError(RobustSelError, ArithmeticError):
    """A numerical computation produced a non-finite or unusable value."""


class NumericOverflowError(NumericError):
    """Non-finite linear predictor."""


class DomainError(NumericError):
    """Linear predictor outside the admissible domain of a family."""


class ExpectationError(NumericError):
    """An expectation under the response distribution could not be computed."""


class SingularDesignError(NumericError):
    """Design matrix (or a derived matrix) is rank deficient."""


class DegenerateScaleError(NumericError):
    """Scale estimate is zero or not finite."""


class BootstrapDegeneracyError(NumericError):
    """Too many bootstrap replicates failed to produce a fit."""


class UnsupportedEstimatorError(RobustSelError, ValueError):
    """Operation is not defined for the supplied estimator type."""


class ReorderingError(NumericError):
    """No nonsingular leading submatrix could be found by row reordering."""
