"""Exception hierarchy shared by every module."""


class RsvdError(Exception):
    """Base class for errors raised by this package."""


class InputError(RsvdError, ValueError):
    """Malformed or out-of-range input."""


class ParseError(InputError):
    """A data file could not be parsed."""


class DecompositionError(RsvdError, ArithmeticError):
    """A matrix decomposition could not be computed."""


class SolveError(RsvdError, ArithmeticError):
    """A linear system is singular."""
