"""Exception types shared across the package.

Exit-code mapping used by the CLI: validation errors exit 2, numerical
failures exit 3, I/O failures exit 4.
"""


class GlvError(Exception):
    """Base class for all package errors."""


class ValidationError(GlvError):
    """Malformed inputs: files, configs, or domain objects violating invariants."""


class StructuralInconsistencyError(ValidationError):
    """Module structure is internally inconsistent (missing pair entries, bad ids)."""


class DegenerateSampleError(ValidationError):
    """A sample carries no usable signal (e.g. all-zero auxiliary abundances)."""


class InsufficientSignalError(ValidationError):
    """All regression rows were masked; dynamics coefficients are unidentifiable."""


class UndefinedEvidenceError(GlvError):
    """A Bayes factor was requested for a pair that never occurs in the chain."""


class NumericalError(GlvError):
    """Linear algebra failed (singular posterior precision, non-finite values)."""
