"""Exception and warning types shared across the package."""


class PseudomodeError(Exception):
    """Base class for errors raised by this package."""


class InputError(PseudomodeError, ValueError):
    """Malformed or inconsistent user input."""


class DomainError(PseudomodeError, ValueError):
    """Parameters outside the supported physical domain (e.g. overdamped bath)."""


class NumericalError(PseudomodeError, RuntimeError):
    """A numerical routine failed to reach its requested accuracy."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConvergenceError(NumericalError):
    """Truncation (Fock or hierarchy depth) did not converge."""


class DimensionCapError(InputError):
    """Refused to build an operator larger than the configured cap."""


class TruncationWarning(UserWarning):
    """Population in the highest retained Fock level exceeded the threshold."""


class FitWarning(UserWarning):
    """An exponential fit fell back to defaults or did not converge."""
