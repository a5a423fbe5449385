"""Exception hierarchy shared by all modules."""


class DelayPredictError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(DelayPredictError, ValueError):
    pass


class ConfigurationError(DelayPredictError, ValueError):
    pass


class DivergenceError(DelayPredictError, ArithmeticError):
    """An orbit left the representable range.

    ``index`` is the position (counted from the initial condition, burn-in
    included) of the first iterate whose magnitude exceeded the limit.
    """

    def __init__(self, index: int, limit: float):
        self.index = index
        self.limit = limit
        super().__init__(f"iterate {index} exceeds magnitude {limit:g}")


class NoNeighborsError(DelayPredictError):
    """No delay vector falls inside the query ball."""


class NoMassError(DelayPredictError):
    """The query ball carries zero measure."""


class InsufficientScalesError(DelayPredictError):
    """Fewer than two scales produced a usable statistic."""


class PreconditionError(DelayPredictError):
    pass


class VerificationFailure(DelayPredictError):
    """A brute-force check found a counterexample.

    ``details`` holds the offending structures/values so callers can dump them.
    """

    def __init__(self, message: str, details=None):
        super().__init__(message)
        self.details = details if details is not None else []
