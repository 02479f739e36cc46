"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so keep the categories coarse.
"""


class QaoaWrapError(Exception):
    """Base class for library errors."""


class ValidationError(QaoaWrapError, ValueError):
    """Malformed input: bad matrix, bad file, bad parameter."""


class InapplicableError(QaoaWrapError, ValueError):
    """A formula or numerical procedure does not apply to this input."""


class RefinementError(InapplicableError):
    """Adaptive sampling could not resolve an eigenvector matching."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class BudgetError(QaoaWrapError):
    """A requested computation exceeds the configured work budget."""
