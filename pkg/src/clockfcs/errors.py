"""Exception types raised by clockfcs."""


class ClockFcsError(Exception):
    """Base class for all library errors."""


class ModelError(ClockFcsError, ValueError):
    """Invalid clockwork, policy or current description."""


class NumericalError(ClockFcsError, ArithmeticError):
    """A numerical routine failed or produced an inconsistent result."""


class KernelDimensionError(NumericalError):
    """The generator does not have a one-dimensional kernel."""

    def __init__(self, dimension, message=None):
        self.dimension = dimension
        super().__init__(message or f"steady state is not unique: kernel dimension {dimension}")


class NonPositiveError(NumericalError):
    """The steady state has a significantly negative eigenvalue."""


class DegenerateCurrentError(NumericalError):
    """The noise of a current with non-zero mean vanishes, so the SNR diverges."""


class NotClassicalError(ModelError):
    """An operation that needs a classical (diagonal) clockwork got a quantum one."""


class SimulationError(NumericalError):
    """A stochastic trajectory could not be continued."""
