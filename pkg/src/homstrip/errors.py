"""Exception hierarchy shared by all modules."""


class HomstripError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(HomstripError):
    """Invalid scenario, parameters, grid or admissibility rule."""


class HypothesisViolation(HomstripError):
    """A sampled coefficient breaks a positivity/boundedness hypothesis."""

    def __init__(self, message, field=None, point=None, value=None):
        super().__init__(message)
        self.field = field
        self.point = point
        self.value = value


class NumericalError(HomstripError):
    """A numerical procedure did not reach its requested accuracy."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class NonConvergenceError(NumericalError):
    """An iterative solver ran out of iterations."""

    def __init__(self, message, achieved=None, iterations=None):
        super().__init__(message, achieved)
        self.iterations = iterations
