"""Exception types shared across the package."""


class PoissonCSError(Exception):
    """Base class for package errors."""


class ConfigurationError(PoissonCSError, ValueError):
    """Invalid parameter combination (bad dimension, bad bounds, ...)."""


class RegimeError(ConfigurationError):
    """Parameters fall outside the regime a formula is defined on."""


class ModelError(PoissonCSError, ValueError):
    """Observation model cannot be evaluated (e.g. negative Poisson mean)."""


class NumericalError(PoissonCSError, ArithmeticError):
    """A solver produced a non-finite objective or iterate."""


class ConstructionError(PoissonCSError, RuntimeError):
    """A randomized construction ran out of budget.

    Attributes
    ----------
    achieved : int
        Number of elements obtained before the budget ran out.
    """

    def __init__(self, message, achieved=0):
        super().__init__(message)
        self.achieved = achieved
