"""Exception hierarchy shared by every haarfact module."""


class HaarfactError(Exception):
    """Base class for all library errors."""


class LevelOverflowError(HaarfactError, ValueError):
    """A dyadic level exceeded the fixed-width cap."""


class ResolutionError(HaarfactError, ValueError):
    """A grid resolution is too small for the request or above the cap."""


class ModeMismatchError(HaarfactError, TypeError):
    """Rational and float values were mixed without explicit conversion."""


class SpanError(HaarfactError, ValueError):
    """A function is not in the span the operation requires."""


class PartitionError(HaarfactError, ValueError):
    """A partition or sigma-algebra description is invalid."""


class FaithfulSystemError(HaarfactError, ValueError):
    """A faithful-system invariant or precondition does not hold."""


class HypothesisError(HaarfactError, ValueError):
    """The support-profile hypotheses for the almost faithful factor operators fail."""


class SelectionError(HaarfactError, RuntimeError):
    """The sign-selection search ran out of depth before its postconditions held."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = dict(diagnostic or {})


class UnsupportedSpaceError(HaarfactError, ValueError):
    """The requested space is not supported by this operation."""


class StageFailure(HaarfactError, RuntimeError):
    """A pipeline stage could not certify its postconditions."""

    def __init__(self, stage, message, diagnostic=None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.diagnostic = dict(diagnostic or {})


class VerificationMismatch(HaarfactError):
    """An independent re-check of a certificate failed."""

    def __init__(self, clause, detail=""):
        super().__init__(f"{clause}: {detail}" if detail else clause)
        self.clause = clause
        self.detail = detail
