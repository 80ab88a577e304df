"""Exception types shared across the package.

Each failure mode the extraction pipeline can signal gets its own type so
callers (and the CLI exit-code mapping) can tell them apart.
"""

from __future__ import annotations


class GradleakError(Exception):
    """Base class for all package-specific errors."""


class GenerationError(GradleakError):
    """Random instance generation exhausted its resampling budget."""


class SingularMatrixError(GradleakError):
    """Linear solve hit a pivot below the singularity tolerance."""


class GeometryError(GradleakError):
    """Sign-recovery query-point construction failed (thin cell, rank loss)."""


class ExtractionFailure(GradleakError):
    """Binary search found no gradient change in a bracket that needs one.

    Raised after the retry budget is exhausted; signals a violated assumption
    (wrong assumed width, crossings outside the search range, crossings closer
    than the search resolution) rather than a numerical bug.
    """


class SignRecoveryError(GradleakError):
    """Sign-recovery solution did not round to a valid {-1,0,1} pattern.

    Usually means the recovered weighted normals were wrong.
    """


class ConfigError(GradleakError):
    """A configuration value makes the requested procedure impossible."""


class MatchAmbiguityError(GradleakError):
    """Row matching found two candidates too close to tell apart."""
