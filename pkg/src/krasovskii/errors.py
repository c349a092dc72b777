"""Exception hierarchy shared by the package."""


class KrasovskiiError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(KrasovskiiError, ValueError):
    """Array shapes do not match the declared system dimensions."""


class DomainError(KrasovskiiError, ValueError):
    """A map was evaluated outside the region where it is defined."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class SolverError(KrasovskiiError, RuntimeError):
    """A linear solve met a singular (or numerically singular) matrix."""


class ConvergenceError(KrasovskiiError, RuntimeError):
    """An iterative method stopped without meeting its tolerance."""


class NotApplicableError(KrasovskiiError, ValueError):
    """A construction was requested for a model that lacks its precondition."""


class InfeasibleSetpointError(KrasovskiiError, ValueError):
    """No equilibrium exists for the requested operating point."""


class RegimeError(KrasovskiiError, ValueError):
    """An equilibrium exists but falls outside the physical operating range."""


class RankError(KrasovskiiError, ValueError):
    """A constraint or saddle-point matrix is rank deficient."""


class MetricError(KrasovskiiError, ValueError):
    """A storage metric is not symmetric, not PSD, or not definite enough."""


class SimulationError(KrasovskiiError, RuntimeError):
    """Integration aborted; ``time`` and ``state`` locate the failure."""

    def __init__(self, message, time=None, state=None):
        super().__init__(message)
        self.time = time
        self.state = state


class DivergenceError(SimulationError):
    pass


class DomainExitError(SimulationError):
    pass


class NonFiniteError(SimulationError):
    pass


class MissingChannelError(KrasovskiiError, ValueError):
    """A trajectory lacks a channel required by the requested check."""


class ConfigError(KrasovskiiError, ValueError):
    """A run configuration failed validation."""
