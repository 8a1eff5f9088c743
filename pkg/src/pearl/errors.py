"""Exception hierarchy for the pearl package.

Plain ``ValueError`` is reserved for caller mistakes (bad arguments,
mismatching shapes the caller controls); the classes below mark failures
with domain meaning that callers may want to catch individually.
"""


class PearlError(Exception):
    """Base class for all pearl-specific errors."""


class DatasetFormatError(PearlError):
    """A dataset file is malformed or violates a format invariant."""


class DimensionError(PearlError):
    """Array dimensions are inconsistent with the declared task shape."""


class DegenerateInputError(PearlError):
    """Input is degenerate for the requested operation (e.g. zero vector under cosine)."""


class SamplingError(PearlError):
    """A sampling request cannot be satisfied by the available population."""


class CoverageError(PearlError):
    """A required preference label is missing for a pair that carries matching mass."""


class NumericalError(PearlError):
    """A numerical routine produced non-finite values or lost stability."""


class TrainingError(PearlError):
    """Reward-model training diverged or produced non-finite losses."""
