"""Exception and warning types shared across the package.

Two branches matter to callers: ``ValidationError`` means the caller handed
us something malformed (bad shapes, bad flags, corrupt files) and maps to
exit code 2 in the command line tool; every other ``RludictError`` means the
inputs were well formed but the computation could not complete (rank
collapse, singular systems) and maps to exit code 3.
"""


class RludictError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(RludictError, ValueError):
    """Malformed input: wrong shape, wrong dtype, bad flag, corrupt file."""


class DimensionMismatchError(ValidationError):
    """Operands whose dimensions cannot be combined."""


class InputTooShortError(ValidationError):
    """Byte input shorter than the minimum a feature map needs."""


class BundleFormatError(ValidationError):
    """Dictionary archive or bundle bytes that fail structural checks."""


class ManifestError(ValidationError):
    """Corpus manifest that is malformed or references missing files."""


class RankDeficientError(RludictError):
    """Matrix numerically rank deficient where full column rank is required."""


class RankCollapseError(RludictError):
    """Sketch rank fell below the requested decomposition rank.

    Carries ``requested_rank`` and ``pivot_step`` (the elimination step whose
    pivot vanished, also a lower bound on the achieved rank).
    """

    def __init__(self, message, requested_rank=None, pivot_step=None):
        super().__init__(message)
        self.requested_rank = requested_rank
        self.pivot_step = pivot_step


class InfeasibleError(RludictError):
    """No feasible solution exists, e.g. every size assignment is invalid."""


class NoConvergenceWarning(RuntimeWarning):
    """Iteration budget exhausted before the stopping tolerance was met."""


class ShortInputWarning(UserWarning):
    """Input shorter than one fragment; degraded to a whole-input fragment."""
