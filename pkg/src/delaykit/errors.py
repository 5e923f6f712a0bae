"""Exception hierarchy.

Every error carries an ``exit_code`` so the batch front end can map a
failure to its diagnostic category without inspecting messages:
2 for bad inputs, 3 for numerical failures, 4 for poor statistics.
"""


class DelayKitError(Exception):
    exit_code = 1


class InvalidParameterError(DelayKitError, ValueError):
    exit_code = 2


class ConfigError(InvalidParameterError):
    pass


class InvalidGeometryError(InvalidParameterError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class ClosedChannelError(InvalidParameterError):
    pass


class ApproximationDomainError(InvalidParameterError):
    pass


class NumericalError(DelayKitError, ArithmeticError):
    exit_code = 3


class NumericalSingularityError(NumericalError):
    pass


class ResolutionError(NumericalError):
    def __init__(self, message, required_points=None):
        super().__init__(message)
        self.required_points = required_points


class MassCoverageError(NumericalError):
    def __init__(self, message, tail_estimate=None):
        super().__init__(message)
        self.tail_estimate = tail_estimate


class UndefinedMomentError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class WindowError(NumericalError):
    pass


class StatisticsError(DelayKitError):
    exit_code = 4


class InsufficientStatisticsError(StatisticsError):
    pass
