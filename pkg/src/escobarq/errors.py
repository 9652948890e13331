"""Exception hierarchy shared by all modules.

Configuration problems and numerical refusals are kept apart because they
map to different CLI exit codes (2 and 3 respectively).
"""


class EscobarError(Exception):
    """Base class for all package errors."""


class ConfigError(EscobarError):
    """Invalid configuration, field shape, or argument domain."""


class NumericRefusal(EscobarError):
    """A precondition needed for a trustworthy number does not hold.

    Carries an optional ``details`` dict with diagnostics (suggested
    truncation radius, measured eigenvalue, tail budget, ...).
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = dict(details or {})


class UndefinedQuotientError(NumericRefusal):
    """Quotient requested where it is not defined (zero boundary norm, ...)."""
