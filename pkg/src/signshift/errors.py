"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SignShiftError(Exception):
    """Base class for every error raised by the package."""


class AmbiguousProjection(SignShiftError):
    """Point is too far from the interface for a unique nearest point."""


class NotTangent(SignShiftError):
    """Vector is not orthogonal to the given normal direction."""


class DimensionMismatch(SignShiftError):
    """Matrices or vectors have incompatible shapes."""


class NotPositiveDefinite(SignShiftError):
    """A coefficient matrix failed the positive-definiteness check."""


class TubeTooWide(SignShiftError):
    """Tube half-width exceeds the reach of an interface component."""


class InvalidBeta(SignShiftError):
    """Curvature reflection parameter outside its admissible range."""


class SingularAtCenter(SignShiftError):
    """Kelvin transform evaluated at its center."""


class OutsideTube(SignShiftError):
    """Point lies outside the region where a reflection is defined."""


class DomainError(SignShiftError):
    """Special function evaluated outside its domain."""


class SingularSystem(SignShiftError):
    """Linear system could not be factorized.

    Attributes
    ----------
    pivot_indicator : float
        Smallest over largest pivot magnitude observed before failure.
    """

    def __init__(self, message: str, pivot_indicator: float = 0.0):
        super().__init__(message)
        self.pivot_indicator = pivot_indicator


class BadResolution(SignShiftError):
    """Mesh resolution parameters are invalid."""


class InconsistentMesh(SignShiftError):
    """Mesh region tags disagree with the scenario geometry."""


class FieldEvaluation(SignShiftError):
    """A coefficient field could not be evaluated."""


class ParseError(SignShiftError):
    """Scenario file could not be parsed."""


class ValidationError(SignShiftError):
    """Scenario violates a documented invariant."""


class InsufficientData(SignShiftError):
    """Too few successful solves to reach a verdict."""
