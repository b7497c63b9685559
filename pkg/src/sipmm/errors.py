"""Exception hierarchy shared by all modules."""


class SipmmError(Exception):
    """Base class; ``code`` is the CLI exit status for this error family."""

    code = 1


class DomainError(SipmmError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    code = 3


class StepSizeError(DomainError):
    """The step size violates a scheme's solvability restriction."""

    code = 4


class ConvergenceError(SipmmError, RuntimeError):
    """An iterative solver exhausted its budget.

    ``step_index`` and ``path_indices`` are filled in by the integrators and
    the harness as the error propagates outward.
    """

    code = 5

    def __init__(self, message, *, step_index=None, path_indices=None):
        super().__init__(message)
        self.step_index = step_index
        self.path_indices = path_indices


class ConfigError(SipmmError, ValueError):
    code = 2
