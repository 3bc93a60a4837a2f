"""Exception types shared across the package.

Mathematical check failures are never signalled by exceptions; they are
structured verdicts in reports.  Exceptions mark contract violations
(bad arguments, exhausted precision, malformed input).
"""


class QPrismError(Exception):
    """Base class for all package errors."""


class NotAUnit(QPrismError):
    """Inversion requested for an element of the maximal ideal."""


class InvalidArgs(QPrismError):
    """Arguments outside an operation's domain."""


class PrecisionExhausted(QPrismError):
    """A delta application would drop below one valid p-adic digit."""


class OrderOverflow(QPrismError):
    """A delta application would need a generator beyond the order cap."""


class WindowTooSmall(QPrismError):
    """Membership undecided at the configured degree window."""


class CapExceeded(QPrismError):
    """Divided degree beyond the configured truncation."""


class RankMismatch(QPrismError):
    """Module ranks incompatible with the requested operation."""


class WrongLevel(QPrismError):
    """Operation requires a connection of the other level."""


class NotAChainMap(QPrismError):
    """Square of a purported chain map does not commute."""


class WindowUnstable(QPrismError):
    """An operator escaped the degree window it was asserted to preserve."""


class NotBounded(QPrismError):
    """Torsion bound required but reported unbounded at the cap."""


class SpecError(QPrismError):
    """Malformed input file or command line; carries the offending field."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
