"""Exception types raised by the quantization routines."""


class QuantizationError(Exception):
    """Base class for all errors raised by :mod:`mmdquant`."""


class DomainError(QuantizationError, ValueError):
    """An argument lies outside the domain of the function."""


class DegeneratePoints(QuantizationError, ValueError):
    """Support points are not pairwise distinct."""


class IllConditioned(QuantizationError):
    """Kernel matrix could not be factorized within the jitter ceiling."""


class ActiveSetCycle(QuantizationError):
    """The active-set iteration exceeded its iteration cap.

    The last iterate is attached as ``last_iterate`` (a weight vector) and
    the corresponding zero-weight index set as ``active_set``.
    """

    def __init__(self, message, last_iterate=None, active_set=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.active_set = active_set


class NumericalAbort(QuantizationError):
    """Stochastic descent stopped early on a numerical failure.

    ``state`` and ``trace`` hold whatever was computed before the failure so
    callers can still persist partial output.
    """

    def __init__(self, message, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace
