"""Exception hierarchy shared by all modules.

Each class carries the process exit code the command-line front end uses
when the error escapes a subcommand.
"""


class SpiralEulerError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class DomainError(SpiralEulerError, ValueError):
    """A parameter lies outside the range where the construction is defined."""

    exit_code = 2


class ConfigError(SpiralEulerError, ValueError):
    """A configuration or profile document is malformed."""

    exit_code = 2

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SymmetryError(ConfigError):
    """Input data is not invariant under the declared rotation symmetry."""


class PreconditionError(SpiralEulerError, ValueError):
    """An operation was called on data violating its stated precondition."""

    exit_code = 2


class UnsupportedModeError(PreconditionError):
    """A Fourier mode that the linear theory excludes (|n| = 1) was requested."""


class NumericalError(SpiralEulerError, ArithmeticError):
    """A numerical sub-step failed (singular matrix, divergent series, ...)."""

    exit_code = 3


class OutOfRangeError(NumericalError):
    """A query falls outside the range resolved by the radial grid."""


class NonConvergenceError(NumericalError):
    """An iteration did not reach its tolerance; ``report`` holds the history."""

    exit_code = 3

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class DegenerateStateError(SpiralEulerError, ArithmeticError):
    """The spiral coordinates stopped being valid (a sign condition failed)."""

    exit_code = 4

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class SolutionIOError(SpiralEulerError, OSError):
    """Reading or writing a solution file failed."""

    exit_code = 5


class VersionError(SolutionIOError):
    """The solution file was written by an incompatible format version."""


class CorruptionError(SolutionIOError):
    """The solution file is truncated or its payload is inconsistent."""
