"""Exception hierarchy shared across the package."""


class M2N2Error(Exception):
    """Base class for all errors raised by this package."""


class FormatError(M2N2Error):
    """File does not look like an attention tensor file (bad magic/version)."""


class CorruptionError(M2N2Error):
    """File has the right format markers but the payload is truncated or garbled."""


class ValidationError(M2N2Error):
    """Input violates a documented precondition or invariant."""


class ConvergenceError(M2N2Error):
    """An iterative normalization failed to converge within its round cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class ContractError(M2N2Error):
    """Caller passed an object in the wrong state (e.g. not doubly stochastic)."""


class NumericError(M2N2Error):
    """Non-finite values appeared during iteration."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class StateError(M2N2Error):
    """Session operation is invalid in the current session state."""
