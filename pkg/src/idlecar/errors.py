"""Exception types shared across the pipeline."""


class IdleCarError(Exception):
    """Base class for all package errors."""


class FormatError(IdleCarError, ValueError):
    """A file does not follow its declared on-disk format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TruncationError(FormatError):
    """Container payload is shorter or longer than its header announces."""


class DataError(IdleCarError, ValueError):
    """Values are non-finite or physically implausible."""


class GeometryError(IdleCarError, ValueError):
    """A box does not intersect the frame, or is degenerate."""


class DomainError(IdleCarError, ValueError):
    """Unknown enumeration member (region, view, engine state, ...)."""


class ValidationError(IdleCarError, ValueError):
    """A record parses but violates a value constraint."""


class SpecError(IdleCarError, ValueError):
    """Layer list or input shapes do not chain."""


class UsageError(IdleCarError, RuntimeError):
    """An operation was called out of contract (empty sets, missing cache...)."""


class TrainingError(IdleCarError, RuntimeError):
    """Training cannot proceed with the supplied data."""
