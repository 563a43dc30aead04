"""Exception hierarchy shared by every stage of the pipeline."""


class NTKTransferError(Exception):
    """Base class; the CLI maps subclasses onto exit codes."""

    exit_code = 1


class ConfigError(NTKTransferError, ValueError):
    exit_code = 2


class NumericalError(NTKTransferError, ArithmeticError):
    exit_code = 3


class KernelDomainError(NumericalError):
    pass


class SpectralResolutionError(NumericalError):
    pass


class ModeDeficitError(NumericalError):
    """Raised when the sample size reaches the number of non-zero modes.

    The ridge-less learning-curve formulas have no positive kappa there.
    """


class ConditioningError(NumericalError):
    pass


class InvariantFailure(NTKTransferError, AssertionError):
    exit_code = 4
