"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ShipnavError(Exception):
    """Base class for all package errors."""


class ConfigError(ShipnavError):
    """Invalid or inconsistent run configuration."""


class InvalidCoordinateError(ShipnavError):
    """Coordinate outside its domain (non-finite, |lat| >= pi/2, ...)."""


class OutOfDomainError(ShipnavError):
    """Operation left the valid coordinate domain (e.g. pole crossing)."""


class EmptyInputError(ShipnavError):
    """An operation received no usable data."""


class ParseError(ShipnavError):
    """Malformed input file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(ShipnavError):
    """Structurally valid input that violates a data contract."""


class FormatError(ShipnavError):
    """Malformed serialized artifact (raster, sample dump, ...)."""


class InitializationError(ShipnavError):
    """Sampler initial point has non-finite log density."""


class ModelError(ShipnavError):
    """Log density returned NaN."""

    def __init__(self, message: str, coords=None):
        self.coords = coords
        super().__init__(message)


class FittingError(ShipnavError):
    """A track-level fit could not be run."""


class DiagnosticsError(ShipnavError):
    """Convergence diagnostics are unavailable or undefined."""
