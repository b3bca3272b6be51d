"""
This module defines the exception hierarchy shared by the spectral, dynamics and scenario packages.
Every error also derives from the closest builtin so callers can catch ValueError/RuntimeError.
"""


class FeedbackAdiabaticsError(Exception):
    """Base class for all errors raised by this project."""


class NotHermitian(FeedbackAdiabaticsError, ValueError):
    pass


class DimensionMismatch(FeedbackAdiabaticsError, ValueError):
    pass


class InvalidStep(FeedbackAdiabaticsError, ValueError):
    pass


class DegenerateSpectrum(FeedbackAdiabaticsError):
    """Raised when two adjacent adiabatic levels come closer than the gap tolerance."""

    def __init__(self, message: str, min_gap: float = None, sample_index: int = None):
        if sample_index is not None:
            message = f"{message} (sample {sample_index})"
        super().__init__(message)
        self.min_gap = min_gap
        self.sample_index = sample_index


class FrameMismatch(FeedbackAdiabaticsError):
    """Raised when two eigenframes cannot be aligned column by column."""

    def __init__(self, message: str, overlaps=None, sample_index: int = None):
        if sample_index is not None:
            message = f"{message} (sample {sample_index})"
        super().__init__(message)
        self.overlaps = overlaps
        self.sample_index = sample_index


class WindowTooWide(FeedbackAdiabaticsError, ValueError):
    pass


class SupportViolation(FeedbackAdiabaticsError, ValueError):
    pass


class ParseError(FeedbackAdiabaticsError, ValueError):
    """Raised for malformed scenario documents. Names the offending field and line."""

    def __init__(self, message: str, field: str = None, line: int = None):
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.field = field
        self.line = line


class SchemaError(FeedbackAdiabaticsError, ValueError):
    def __init__(self, message: str, field: str = None):
        if field:
            message = f"{message} (field '{field}')"
        super().__init__(message)
        self.field = field


class IntegrationError(FeedbackAdiabaticsError, RuntimeError):
    """Base class for failures while advancing a trajectory."""

    def __init__(self, message: str, time: float = None):
        if time is not None:
            message = f"{message} at t={time:.6g}"
        super().__init__(message)
        self.time = time


class StepSizeUnderflow(IntegrationError):
    pass


class NonFiniteState(IntegrationError):
    pass


class SimplexViolation(IntegrationError):
    pass


class TraceDrift(IntegrationError):
    pass


class ClassificationError(FeedbackAdiabaticsError, RuntimeError):
    """Raised when the equilibrium search of the long-time classification fails."""
