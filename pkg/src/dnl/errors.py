"""Exception types shared across the package."""


class DimensionError(ValueError):
    """A node function does not match the domain size."""


class ConfigError(ValueError):
    """Invalid experiment or solver configuration."""


class NumericalError(ArithmeticError):
    """A numerical routine (quadrature, root bracketing) failed."""


class NonConvergenceError(NumericalError):
    """An iterative solver hit its iteration budget.

    ``best`` holds the best iterate found (solver specific) and
    ``residual`` its residual norm.
    """

    def __init__(self, message, best=None, residual=float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class SingularGradientError(NumericalError):
    """Second derivative of an energy is unbounded at the iterate.

    Raised for p < 2 without smoothing when an edge difference vanishes;
    retry with a positive ``eps_reg``.
    """
