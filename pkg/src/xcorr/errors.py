"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`XCorrError` so callers
(and the CLI) can distinguish "you misused the library" from genuine bugs.
"""

from __future__ import annotations


class XCorrError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(XCorrError, ValueError):
    """A numeric argument is outside its mathematical domain."""


class ConfigError(XCorrError, ValueError):
    """A configuration object violates its invariants."""


class SpecError(XCorrError, ValueError):
    """A targeting specification is internally inconsistent."""


class AxiomViolation(XCorrError):
    """A truth table fails monotonicity or input-sensitivity.

    Core extraction is only defined for monotone, non-constant functions;
    anything else has no unique minimal family.
    """


class OverlapError(XCorrError, ValueError):
    """Grouped placement was given groups that share an input."""


class EmptyFamily(XCorrError):
    """A witness search was attempted on a family with no members."""


class BudgetExceeded(XCorrError):
    """A search exhausted its configured test budget before finishing.

    Carries the partial result so callers can still inspect what was found.
    """

    def __init__(self, message: str, partial=None, tests_used: int = 0):
        super().__init__(message)
        self.partial = partial
        self.tests_used = tests_used


class ConvergenceError(XCorrError):
    """Root finding failed to bracket or converge (should not occur for
    valid parameters; kept as a loud failure rather than a silent NaN)."""


class Inadmissible(XCorrError):
    """The requested noise ratio exceeds what any threshold can separate
    at the given family size/order.  Carries the binding maximum."""

    def __init__(self, message: str, m_lr: float):
        super().__init__(message)
        self.m_lr = m_lr


class MismatchedUniverse(XCorrError, ValueError):
    """Predictions and ground truth cover different output IDs.

    Scoring refuses to guess which side is wrong; the caller must align
    them explicitly.
    """


class PlateauNotFound(XCorrError):
    """Recall never stabilised within the probed account budget.

    Knee detection raises this only in strict mode; sweeps record it as a
    flag on the affected row and keep going.
    """
