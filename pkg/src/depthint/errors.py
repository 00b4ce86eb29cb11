"""Exception hierarchy shared by every module of the package."""


class DepthIntError(Exception):
    """Base class for all errors raised by depthint."""


class ShapeError(DepthIntError, ValueError):
    """Array dimensions do not agree with the grid they are used on."""


class DomainError(DepthIntError, ValueError):
    """A value lies outside its admissible range (non-finite, negative, ...)."""


class SizeError(DepthIntError, ValueError):
    """Problem too large for a dense, test-scale routine."""


class EmptyMaskError(DepthIntError, ValueError):
    """A reduction was requested over zero valid pixels."""


class StateError(DepthIntError, RuntimeError):
    """An object was used in a state that does not support the operation."""


class SingularSystemError(DepthIntError, ArithmeticError):
    """The normal equations are singular (no valid observation)."""


class DivergenceError(DepthIntError, ArithmeticError):
    """The iterative solver produced a non-finite or non-SPD quantity."""


class ConvergenceError(DepthIntError, ArithmeticError):
    """The iterative solver hit its iteration cap far from a solution."""
