"""Exception types raised across the package.

Two families matter to callers: :class:`ValidationError` (bad input, CLI exit
code 2) and :class:`NumericalError` (a computation could not be completed or
failed a runtime self-check, CLI exit code 3).
"""


class NRLinesError(Exception):
    """Base class for all package errors."""


class ValidationError(NRLinesError, ValueError):
    """Input rejected before any numerics ran."""


class NetlistError(ValidationError):
    """Netlist document failed schema, physical or dimension checks.

    ``kind`` is ``"schema"``, ``"physical"``, ``"dimension"`` or ``"io"``.
    """

    def __init__(self, kind: str, message: str, path: str = ""):
        self.kind = kind
        self.path = path
        where = f" at {path}" if path else ""
        super().__init__(f"{kind} violation{where}: {message}")


class NumericalError(NRLinesError, ArithmeticError):
    """A numerical routine failed or a runtime invariant did not hold."""


class NotUnitary(ValidationError):
    pass


class NotSkew(ValidationError):
    pass


class DegenerateMinusOne(NumericalError):
    """S has eigenvalue -1; no admittance presentation exists."""


class DegeneratePlusOne(NumericalError):
    """S has eigenvalue +1; no impedance presentation exists."""


class NotDegenerate(NumericalError):
    pass


class NoImmittance(ValidationError):
    """The element has no admittance form usable at the line boundary."""


class NonReciprocal(ValidationError):
    pass


class ScanTooCoarse(NumericalError):
    pass


class WrongAlpha(ValidationError):
    pass


class TooFewModes(NumericalError):
    pass


class UnexpectedT(NumericalError):
    pass


class UnsupportedConfig(ValidationError):
    pass


class CFLViolation(ValidationError):
    pass


class PulseOverlap(ValidationError):
    pass


class BlowUp(NumericalError):
    pass


class GeometryMismatch(ValidationError):
    pass


class InvariantViolation(NumericalError):
    """A property the construction guarantees was found broken at runtime."""
