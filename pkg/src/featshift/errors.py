"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage/config problems exit 1, data
problems exit 2, anything else exits 3.
"""

from __future__ import annotations


class FeatshiftError(Exception):
    """Base class for all package errors."""


class InvalidDataError(FeatshiftError, ValueError):
    """Input data is malformed: non-finite entries, missing values, bad CSV."""


class InsufficientDataError(FeatshiftError, ValueError):
    """Not enough rows for the requested fit or resampling scheme."""


class ShapeError(FeatshiftError, ValueError):
    """Dimension mismatch between a model and a query point."""


class InvalidArgumentError(FeatshiftError, ValueError):
    """An argument is outside its documented domain."""


class WeightTooLargeError(FeatshiftError, ValueError):
    """Requested edge weight pushes the precision matrix out of the PD cone.

    Attributes
    ----------
    minor : int
        1-based index of the failing leading minor.
    """

    def __init__(self, weight: float, minor: int):
        self.weight = weight
        self.minor = minor
        super().__init__(
            f"precision matrix not positive definite at edge weight {weight:g} "
            f"(leading minor {minor})"
        )


class UnreachableTargetError(FeatshiftError, ValueError):
    """Calibration target cannot be met inside the searchable interval.

    Attributes
    ----------
    max_attainable : float
        Largest value reachable inside the bracket.
    """

    def __init__(self, target: float, max_attainable: float):
        self.target = target
        self.max_attainable = max_attainable
        super().__init__(
            f"target {target:g} unreachable; maximum attainable is {max_attainable:g}"
        )


class ConfigError(FeatshiftError, ValueError):
    """A run configuration is malformed (unknown keys, bad values)."""
