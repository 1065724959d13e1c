"""Exception hierarchy shared by all modules."""


class MompcError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MompcError, ValueError):
    """Array shapes do not match the model dimensions."""


class DynamicsBlowUpError(MompcError):
    """A rollout produced a non-finite state.

    Attributes
    ----------
    step : int
        Index ``k`` of the first non-finite state ``x(k)``.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"dynamics blow-up: non-finite state at step {step}")


class PreconditionError(MompcError, ValueError):
    """An operation was called with arguments violating its precondition."""


class RotatedCostsUnavailable(MompcError):
    """The storage function (or the dissipativity certificate) is missing."""


class SolverError(MompcError):
    """The inner nonlinear program failed.

    Attributes
    ----------
    best : object or None
        Best iterate found (an ``NLPResult``), if any.
    """

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class BoundSetInfeasible(SolverError):
    """No feasible control sequence satisfies the imposed cost upper bounds."""


class ConfigError(MompcError, ValueError):
    """An experiment configuration is invalid."""
