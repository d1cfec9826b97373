"""Exception types shared across the package."""


class AutologisticError(Exception):
    """Base class for all package errors."""


class ConfigError(AutologisticError):
    """Invalid or inconsistent run configuration."""


class DataValidationError(AutologisticError):
    """Input data violates a structural invariant (shape, range, coverage)."""


class EstimationError(AutologisticError):
    """Numerical failure during pseudo-likelihood maximization."""


class SingularDesignError(EstimationError):
    """The weighted design cross-product is singular.

    Carries the names of the offending (collinear or constant) columns.
    """

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"singular design, collinear columns: {self.columns}")


class CoalescenceError(AutologisticError):
    """Coupled chains failed to coalesce within the configured sweep budget."""

    def __init__(self, max_sweeps, n_pending, message=None):
        self.max_sweeps = max_sweeps
        self.n_pending = n_pending
        super().__init__(
            message
            or f"no coalescence after {max_sweeps} sweeps ({n_pending} chains still apart)"
        )


class MonotonicityError(AutologisticError):
    """Exact sampling refused: negative spatial autoregression breaks the
    monotone coupling. Callers should fall back to plain Gibbs sampling."""
