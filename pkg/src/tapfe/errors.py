"""Exception types raised across the package."""


class TapfeError(Exception):
    """Base class for all package errors."""


class DomainError(TapfeError, ValueError):
    """An argument lies outside the domain of the operation."""


class ModeError(TapfeError, ValueError):
    """A profile has the wrong mode (CDF vs GAMMA) for the operation."""


class NotApplicableError(TapfeError, ValueError):
    """The requested formula does not apply to these inputs."""


class GridError(TapfeError, RuntimeError):
    """The x-grid is too small for the requested solve."""


class GridEscapeError(TapfeError, RuntimeError):
    """Simulated paths left the x-grid."""


class ConvergenceError(TapfeError, RuntimeError):
    """An iterative scheme failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class OptimizerError(TapfeError, RuntimeError):
    """Every optimizer start failed."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class SizeError(TapfeError, ValueError):
    """A system size exceeds an enumeration or memory cap."""


class UnsupportedPError(TapfeError, ValueError):
    """The finite-N code only supports p in {2, 3}."""


class DegenerateStateError(TapfeError, RuntimeError):
    """A pure state carries zero Gibbs weight."""


class SpecParseError(TapfeError, ValueError):
    """A spec or manifest file could not be parsed."""
