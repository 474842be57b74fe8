"""Exception hierarchy. CLI exit codes key off these classes."""


class ItoLabError(Exception):
    pass


class InvalidArgument(ItoLabError, ValueError):
    pass


class ConfigError(InvalidArgument):
    pass


class NumericalFailure(ItoLabError, ArithmeticError):
    pass


class DivergenceError(NumericalFailure):
    def __init__(self, message, step=None, stream=None):
        super().__init__(message)
        self.step = step
        self.stream = stream


class NonConvergenceError(NumericalFailure):
    def __init__(self, message, ratio=None, iterations=None):
        super().__init__(message)
        self.ratio = ratio
        self.iterations = iterations


class DegenerateFitError(NumericalFailure):
    pass


class CappedExitError(NumericalFailure):
    def __init__(self, message, capped_fraction=None):
        super().__init__(message)
        self.capped_fraction = capped_fraction
