"""Exception hierarchy.

The CLI maps ``ValidationError`` to exit code 1 and ``NumericalError`` to
exit code 2.
"""


class CovfarError(Exception):
    pass


class ValidationError(CovfarError, ValueError):
    """Bad input: malformed files, unknown levels, insufficient data."""


class NumericalError(CovfarError, ArithmeticError):
    """A fit could not be carried out or did not converge."""
