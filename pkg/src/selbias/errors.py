"""Exception hierarchy.

Validation problems (bad inputs, malformed files) and numerical problems
(non-finite updates, failed searches, degenerate selection) are kept apart
because the command line maps them to different exit codes.
"""


class SelbiasError(Exception):
    """Base class for all package errors."""


class ValidationError(SelbiasError, ValueError):
    """Input outside the domain of an operation."""


class NumericalError(SelbiasError, ArithmeticError):
    """A computation could not produce a finite, trustworthy result."""


class DegenerateSelectionError(NumericalError):
    """The selection event has (numerically) zero probability."""


class InsufficientSampleError(NumericalError):
    """Too few Monte Carlo draws satisfied a conditioning event."""


class ConvergenceError(NumericalError):
    """A one-dimensional search failed to bracket or locate its target."""
