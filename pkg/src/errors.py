"""
Exception hierarchy for the invariant field laboratory.
"""

from typing import Optional


class FieldLabError(Exception):
    """Base class for every error raised by the laboratory."""


class DomainError(FieldLabError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class CertificationError(DomainError):
    """The hyperbolic sampler failed its covariance self-check."""

    def __init__(self, message: str, minimal_waves: Optional[int] = None):
        super().__init__(message)
        self.minimal_waves = minimal_waves


class UndefinedSpacingError(DomainError):
    """The typical spacing of a field with a trivial spectrum is undefined."""


class NumericError(FieldLabError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""


class ConfigError(FieldLabError):
    """Invalid command line or config-file content."""
