"""Exception types shared across the package."""


class VesiflowError(Exception):
    """Base class for all package errors."""


class ModeIndexError(VesiflowError):
    """Requested mode index lies outside the active band."""


class ShapeError(VesiflowError):
    """Array shape does not match the discretization."""


class DealiasError(VesiflowError):
    """Cumulative polynomial degree of a product chain exceeds the exact-quadrature budget."""


class TraceClassError(VesiflowError):
    """Noise covariance violates the trace-class hypothesis and no override was given."""


class StabilityError(VesiflowError):
    """Explicit time step violates the linear stability guard."""


class BlowUpError(VesiflowError):
    """Trajectory left the admissible region (non-finite state or energy above the guard)."""

    def __init__(self, message, state=None, diagnostics=None):
        super().__init__(message)
        self.state = state
        self.diagnostics = diagnostics or {}


class ConfigError(VesiflowError):
    """Run configuration failed validation."""


class SnapshotFormatError(VesiflowError):
    """Snapshot file is corrupt or carries an unsupported version."""
