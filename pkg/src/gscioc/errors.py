"""Exception hierarchy shared by the solvers, inference and CLI."""


class GSCIOCError(Exception):
    """Base class for all library errors."""


class InputError(GSCIOCError, ValueError):
    """Bad user input (maps to CLI exit code 2)."""


class DimensionMismatch(InputError):
    pass


class NegativeParameter(InputError):
    pass


class MissingCoefficient(InputError):
    pass


class SchemaError(InputError):
    pass


class InsufficientSamples(InputError):
    pass


class SolverError(GSCIOCError, ArithmeticError):
    """Numerical failure (maps to CLI exit code 3)."""


class NonFiniteDerivative(SolverError):
    def __init__(self, t, what="derivative"):
        self.t = t
        super().__init__(f"non-finite {what} at t={t}")


class NonPositiveDefinitePrecision(SolverError):
    def __init__(self, t, agent):
        self.t = t
        self.agent = agent
        super().__init__(f"policy precision not positive definite at t={t} for agent {agent}")


class SingularMeanSystem(SolverError):
    def __init__(self, t, rcond=None):
        self.t = t
        self.rcond = rcond
        msg = f"coupled mean system singular at t={t}"
        if rcond is not None:
            msg += f" (rcond={rcond:.3g})"
        super().__init__(msg)


class InsufficientVariance(SolverError):
    pass


class ZeroDenominator(SolverError):
    pass


class DivergentTrajectory(SolverError):
    def __init__(self, iteration, norm):
        self.iteration = iteration
        self.norm = norm
        super().__init__(f"trajectory diverged at iteration {iteration} (state norm {norm:.3g})")


class NonFiniteObjective(SolverError):
    def __init__(self, iteration):
        self.iteration = iteration
        super().__init__(f"non-finite objective at iteration {iteration}")


class GridTooCoarse(SolverError):
    pass


class NoConvergence(SolverError):
    def __init__(self, sweeps, change):
        self.sweeps = sweeps
        self.change = change
        super().__init__(f"no convergence after {sweeps} sweeps (policy change {change:.3g})")


class IllConditioned(UserWarning):
    """Warning: coupled mean system is poorly conditioned."""


class NonConvergent(UserWarning):
    """Warning: iteration budget exhausted before the tolerance was met."""
