"""Exception types shared across the package."""


class JointstabError(Exception):
    """Base class for all package errors."""


class ZeroPolynomialError(JointstabError):
    """Root finding or division requested on the zero polynomial."""


class DomainMismatchError(JointstabError):
    """Operands live in different time domains (or sample times differ)."""


class FrequencyAboveNyquistError(JointstabError):
    """A discrete-time response was requested above the Nyquist rate."""


class ImproperSystemError(JointstabError):
    """Operation requires a proper transfer function (deg num <= deg den)."""


class IllPosedLoopError(JointstabError):
    """Feedback interconnection has no solution (algebraic loop is singular)."""


class UnknownLabelError(JointstabError):
    """A signal label was not found on any subsystem."""


class InvalidParamsError(JointstabError):
    """Physical or controller parameters violate their constraints."""


class ConfigError(JointstabError):
    """A configuration value is invalid or inconsistent."""


class ParseError(JointstabError):
    """A config file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AxisMismatchError(JointstabError):
    """Two region grids do not share the same gain axes."""


class NonConvergentError(JointstabError):
    """A time response never settled inside the requested band."""


class InsufficientDurationError(JointstabError):
    """A chirp run is too short to resolve its lowest frequency."""
