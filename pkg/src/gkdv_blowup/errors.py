"""Exception types shared across the toolkit."""


class GkdvError(Exception):
    """Base class for all toolkit errors."""


class GridMismatchError(GkdvError):
    """Two grid functions live on different grids."""


class DomainError(GkdvError):
    """Grid domain too small for the requested construction."""


class UnsupportedOrderError(GkdvError):
    """Derivative or norm order outside the supported range."""


class DegenerateInputError(GkdvError):
    """Input function is degenerate (zero where a denominator needs it)."""


class SolvabilityError(GkdvError):
    """Right-hand side violates the solvability condition of the solve."""


class DiscretizationError(GkdvError):
    """Discrete solve failed to meet its residual contract."""


class ConstructionError(GkdvError):
    """Profile recursion failed to converge at some level."""


class DegeneracyError(GkdvError):
    """Triangular correction system is numerically singular."""


class NonConvergenceError(GkdvError):
    """Newton iteration failed to converge."""

    def __init__(self, message, pairings=None):
        super().__init__(message)
        self.pairings = pairings


class OutOfWindowError(GkdvError):
    """Decomposition left the validity window."""


class ConfigError(GkdvError):
    """Invalid run configuration."""


class BlowupAbortError(GkdvError):
    """Time integration aborted on non-finite or huge field values."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class MissingArtifactError(GkdvError):
    """A required run artifact is absent."""
