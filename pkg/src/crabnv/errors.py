"""Exception types raised across the package."""


class CrabError(Exception):
    """Base class for all package errors."""


class LeakageError(CrabError):
    """Population outside the {|0>, |-1>} qubit subspace is too large."""


class DimensionMismatch(CrabError, ValueError):
    pass


class DomainError(CrabError, ValueError):
    """An argument lies outside the domain of a function."""


class BadStep(CrabError, ValueError):
    pass


class StepTooLarge(CrabError):
    """Halving the propagation step changed the final state too much."""


class NonFiniteObjective(CrabError, FloatingPointError):
    pass


class WindowTooNarrow(CrabError, ValueError):
    """The frequency window cannot host N frequencies with the minimum spacing."""


class NoFeasibleResult(CrabError):
    """No multi-start result satisfied both acceptance thresholds.

    Attributes
    ----------
    best : OptimizationResult or None
        Lowest-merit candidate among the infeasible ones.
    results : list
        Every start's result, in start order.
    """

    def __init__(self, message, best=None, results=()):
        super().__init__(message)
        self.best = best
        self.results = list(results)


class FitFailure(CrabError):
    pass


class NonUniformGrid(CrabError, ValueError):
    pass


class ConfigError(CrabError, ValueError):
    """Invalid run configuration (maps to CLI exit code 2)."""
