"""Exception hierarchy shared by all fairbench modules."""


class FairbenchError(Exception):
    """Base class for every error raised by fairbench."""


class SchemaError(FairbenchError, ValueError):
    pass


class ParseError(FairbenchError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class EmptyDataError(FairbenchError, ValueError):
    pass


class FormatError(FairbenchError, ValueError):
    """Sensitive-feature format is invalid or unsupported for an operation."""


class SplitError(FairbenchError, ValueError):
    pass


class ShapeError(FairbenchError, ValueError):
    pass


class DivergenceError(FairbenchError, ArithmeticError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class UndefinedStatisticError(FairbenchError, ArithmeticError):
    pass


class UndefinedViolationError(FairbenchError, ArithmeticError):
    pass


class UndefinedAurocError(FairbenchError, ArithmeticError):
    pass


class InfeasibleSamplingError(FairbenchError, ValueError):
    pass


class FitError(FairbenchError, ValueError):
    pass


class ApplicationError(FairbenchError, ValueError):
    pass


class InferenceError(FairbenchError, ValueError):
    pass


class TableError(FairbenchError, ValueError):
    pass


class ConfigError(FairbenchError, ValueError):
    pass
