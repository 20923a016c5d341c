"""Exception hierarchy shared by all isocouple modules."""

from __future__ import annotations


class CouplingError(Exception):
    """Base class for every error raised by isocouple."""


class DomainError(CouplingError, ValueError):
    """A parametric coordinate lies outside the domain of a knot vector."""


class ArgumentError(CouplingError, ValueError):
    """An argument violates an operation's preconditions."""


class DegenerateGeometryError(ArgumentError):
    """A point set cannot support the linear polynomial tail (collinear, coplanar, ...)."""


class NumericalError(CouplingError, ArithmeticError):
    """A linear system is singular or too ill-conditioned to trust.

    Parameters
    ----------
    message : str
        Human readable description.
    condition : float, optional
        Condition-number estimate of the offending system, if one was computed.
    """

    def __init__(self, message: str, condition: float | None = None):
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)
        self.condition = condition


class UnsupportedConfigurationError(CouplingError, ValueError):
    """The requested pair of spaces or meshes is not nested or otherwise unsupported."""


class FormatError(CouplingError, ValueError):
    """Malformed wire frame, knot matrix, or text file."""


class ProtocolError(CouplingError):
    """The coupling protocol was violated (version mismatch, repeated handshake, ...)."""


class TransportError(CouplingError, ConnectionError):
    """The peer disconnected or the byte stream ended unexpectedly."""


class ConvergenceError(CouplingError):
    """Sub-iterations did not converge within the allowed budget."""

    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = list(residuals)
