"""Exception types raised across the package.

Everything derives from :class:`AffiltestError` so callers can catch one
base class at the boundary (the command line driver maps these to exit
codes).  Plain ``ValueError``/``KeyError`` are still used for ordinary
argument validation, mirroring how misuse differs from data problems.
"""

from __future__ import annotations


class AffiltestError(Exception):
    """Base class for errors raised by this package."""


class EmptySampleError(AffiltestError):
    """An operation received no observations."""


class DegenerateSampleError(AffiltestError):
    """The sample carries no usable variation (e.g. all values equal)."""


class DataFormatError(AffiltestError):
    """An input file does not match the documented layout."""


class InvalidDensityError(AffiltestError):
    """A user-supplied density is negative or does not integrate to one."""


class SolverError(AffiltestError):
    """The constrained optimizer failed to converge.

    Carries the best iterate found so the caller can inspect it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateCovarianceError(AffiltestError):
    """A constraint covariance could not be formed (zero estimated mass)."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell
