"""Exception hierarchy.

Everything raised on purpose by this package derives from BohmLabError, so
callers can distinguish "your inputs are wrong" (ValidationError subtypes,
CLI exit code 2) from "the computation had to stop" (AbortError subtypes,
CLI exit code 3).
"""


class BohmLabError(Exception):
    """Base class for all errors raised by bohmlab."""


class ValidationError(BohmLabError, ValueError):
    """Invalid inputs: bad grids, states, parameters, or configuration."""


class GridError(ValidationError):
    """Grid construction or compatibility problem."""


class StateError(ValidationError):
    """Wave-function array fails an invariant (shape, finiteness, norm)."""


class ConfigError(ValidationError):
    """Scenario configuration is malformed or inconsistent."""


class AbortError(BohmLabError, RuntimeError):
    """A computation had to stop; partial results are not trustworthy."""


class NodeProximityError(AbortError):
    """Configuration reached a region where the density is below the floor."""

    def __init__(self, message, density=None, floor=None):
        super().__init__(message)
        self.density = density
        self.floor = floor


class OutOfDomainError(AbortError):
    """Configuration left the periodic box (or came within one cell of it)."""


class SupportLeakError(AbortError):
    """Too much probability mass reached the edge of the box."""


class NumericalAbortError(AbortError):
    """Non-finite values appeared during propagation."""


class InconclusiveError(AbortError):
    """An experiment's preconditions failed, so its result is meaningless."""
