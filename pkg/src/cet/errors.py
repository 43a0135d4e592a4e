"""Exception hierarchy shared by every module."""


class CETError(Exception):
    """Base class for all package errors."""


class ShapeError(CETError, ValueError):
    pass


class NumericError(CETError, ArithmeticError):
    pass


class DivergenceError(NumericError):
    """Training loss blew past the divergence guard."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ContractViolation(CETError, RuntimeError):
    pass


class ConfigError(CETError, ValueError):
    pass


class DataError(CETError, ValueError):
    pass


class DataQualityError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class EmptyDatasetError(DataError):
    pass


class LabelIndexError(CETError, IndexError):
    pass


class UndefinedInputError(CETError, ValueError):
    pass
