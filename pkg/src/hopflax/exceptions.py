"""Exception hierarchy shared by every module of the package.

The CLI maps the three families below onto its exit codes:
``InputError`` -> 1, ``HypothesisError`` -> 2, ``NumericalError`` -> 3.
"""


class HopfLaxError(Exception):
    """Base class of all errors raised by the package."""

    exit_code = 1


# =================================================================================================
# Input errors
# =================================================================================================


class InputError(HopfLaxError, ValueError):
    """Malformed input: empty windows, bad sizes, missing fields, bad problem files."""

    exit_code = 1


class ExpressionSyntaxError(InputError):
    """Syntax error in an expression, located by byte offset, line and column."""

    def __init__(self, message: str, source: str = "", position: int = 0):
        self.message = message
        self.source = source
        self.position = position
        head = source[:position]
        self.line = head.count("\n") + 1
        self.column = position - (head.rfind("\n") + 1) + 1
        super().__init__(f"{self.line}:{self.column}: {message}")


class OutOfRangeError(InputError):
    """Query outside a dual window, or too close to the edge of a sample window."""


class UnsupportedInputError(InputError):
    """The operation does not support this representation or dimension."""


# =================================================================================================
# Hypothesis errors
# =================================================================================================


class HypothesisError(HopfLaxError):
    """A mathematical hypothesis of the solver is violated.

    Parameters
    ----------
    message : str
        Diagnostic.
    witness : object, optional
        Data that exhibits the violation (e.g. a non convex triple).
    """

    exit_code = 2

    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


class InvalidDatumError(HypothesisError):
    """Slope datum q is not in D#sigma(y)."""


# =================================================================================================
# Numerical errors
# =================================================================================================


class NumericalError(HopfLaxError, ArithmeticError):
    """A numerical procedure could not reach its goal."""

    exit_code = 3


class ConjugateUndefinedError(NumericalError):
    """The argmax escaped every window expansion: conjugate undefined on window."""


class WindowEscapeError(NumericalError):
    """The minimizer stayed on the search boundary after the last expansion."""


# =================================================================================================
# Verdict carrying errors
# =================================================================================================


class NotDifferentiableError(HopfLaxError):
    """The minimizer set is not a singleton; carries the set."""

    def __init__(self, message: str, minimizers=None):
        self.minimizers = minimizers
        super().__init__(message)
