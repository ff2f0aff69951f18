"""Exception hierarchy.

Every error raised by the library derives from :class:`PanelQBootError`.
Input problems derive from :class:`ValidationError` and numerical problems
from :class:`NumericalError`; the CLI maps these to exit codes 2 and 3.
"""

from __future__ import annotations


class PanelQBootError(Exception):
    pass


class ValidationError(PanelQBootError, ValueError):
    pass


class NumericalError(PanelQBootError, ArithmeticError):
    pass


# paneldata
class UnbalancedPanel(ValidationError):
    pass


class NonContiguousTime(ValidationError):
    pass


class NonNumericCell(ValidationError):
    pass


class DuplicateObservation(ValidationError):
    pass


class InvalidLength(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# qrsolver
class SingularDesign(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class AllWeightsZeroForUnit(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


# pwb
class InvalidWeightLaw(ValidationError):
    pass


class TooManyFailures(NumericalError):
    pass


# lengthsel / inference
class MissingFit(ValidationError):
    pass


class DegenerateDensity(NumericalError):
    pass


class TooFewDraws(ValidationError):
    pass


class NegativeVariance(NumericalError):
    pass


class SingularRestriction(NumericalError):
    pass


class SingularD(NumericalError):
    pass


# simlab
class NonStationary(ValidationError):
    pass
