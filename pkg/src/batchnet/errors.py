"""Exception hierarchy shared by every batchnet module."""


class BatchNetError(Exception):
    """Base class for all errors raised by batchnet."""


class DimensionError(BatchNetError, ValueError):
    pass


class ConfigurationError(BatchNetError, ValueError):
    pass


class NonDifferentiableError(BatchNetError, ValueError):
    pass


class DegenerateInputError(BatchNetError, ValueError):
    pass


class ParseError(BatchNetError, ValueError):
    pass


class ValidationError(BatchNetError, ValueError):
    pass


class StratificationError(BatchNetError, ValueError):
    pass


class DivergenceError(BatchNetError, ArithmeticError):
    """Training produced a non-finite loss or an unusable step size.

    ``epoch`` is the epoch at which the failure was detected (0 means before
    the first update).
    """

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
