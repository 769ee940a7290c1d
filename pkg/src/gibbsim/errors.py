"""Exception types shared across the package."""


class GibbsError(Exception):
    """Base class for all library errors."""


class DomainError(GibbsError, ValueError):
    """An argument violates an operation's stated preconditions."""


class EnumerationLimitError(GibbsError):
    """An exhaustive enumeration was refused because the input is too large."""


class ScheduleRetryError(GibbsError):
    """Covering-schedule construction exhausted its retry budget (likely a bug)."""
