"""Exception types raised across the package."""


class PhaseChainError(Exception):
    """Base class for all package errors."""


class InvalidDimension(PhaseChainError, ValueError):
    pass


class DegenerateKernel(PhaseChainError):
    pass


class InvalidRotation(PhaseChainError, ValueError):
    pass


class DimensionMismatch(PhaseChainError, ValueError):
    pass


class PoleError(PhaseChainError, ArithmeticError):
    """A kernel or coefficient was evaluated at (or too close to) 1 + psi*phi = 0."""

    def __init__(self, message, site=None):
        super().__init__(message)
        self.site = site


class ExpansionFailure(PhaseChainError):
    """No nonnegative discrete expansion was found for a kernel."""


class OracleScaleError(PhaseChainError, ValueError):
    """The dense oracle was asked to handle a chain that is too long."""


class SamplingError(PhaseChainError, ValueError):
    def __init__(self, message, site=None):
        super().__init__(message)
        self.site = site


class StepSizeError(PhaseChainError):
    pass
