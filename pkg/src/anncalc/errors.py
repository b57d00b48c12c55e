"""Exception types raised across the package."""

from __future__ import annotations


class AnnCalcError(Exception):
    """Base class for all library errors."""


class ShapeMismatch(AnnCalcError, ValueError):
    pass


class EmptyNetwork(AnnCalcError, ValueError):
    pass


class ZeroWidthLayer(AnnCalcError, ValueError):
    pass


class DimMismatch(AnnCalcError, ValueError):
    pass


class UnsupportedActivation(AnnCalcError, ValueError):
    pass


class ParseError(AnnCalcError, ValueError):
    pass


class SchemaViolation(AnnCalcError, ValueError):
    pass


class TargetTooSmall(AnnCalcError, ValueError):
    pass


class NotEndomorphic(AnnCalcError, ValueError):
    pass


class EmptyChain(AnnCalcError, ValueError):
    pass


class NonpositiveR(AnnCalcError, ValueError):
    pass


class MissingLipschitz(AnnCalcError, ValueError):
    pass


class NonFiniteNetwork(AnnCalcError, ValueError):
    """A network with NaN or infinite weights was handed to a certification run."""


class DegenerateFit(AnnCalcError, ValueError):
    pass


class UnknownCommand(AnnCalcError, ValueError):
    pass


class MissingFlag(AnnCalcError, ValueError):
    pass


class FileNotFound(AnnCalcError, ValueError):
    pass


class NoConvergence(AnnCalcError, RuntimeError):
    pass


class CapExceeded(AnnCalcError, RuntimeError):
    pass


class BoundViolated(AnnCalcError, AssertionError):
    """A measured quantity exceeded a proven bound."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point
