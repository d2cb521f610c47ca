"""Exception hierarchy. Each family maps onto one CLI exit code."""


class ActiprofileError(Exception):
    exit_code = 2


class ConfigError(ActiprofileError):
    """Bad or missing configuration; usage problems."""

    exit_code = 1


class DataError(ActiprofileError):
    """Input data failed validation."""

    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GapError(DataError):
    def __init__(self, message, missing=()):
        self.missing = list(missing)
        super().__init__(message)


class AlignmentError(DataError):
    pass


class DuplicateError(DataError):
    pass


class EmptySeriesError(DataError):
    pass


class DependencyError(DataError):
    """An upstream artifact a command needs is missing."""


class NumericalError(ActiprofileError):
    exit_code = 3


class DegenerateDayError(NumericalError):
    pass


class InfeasibleKError(NumericalError):
    pass


class SingularDesignError(NumericalError):
    def __init__(self, message, columns=()):
        self.columns = list(columns)
        super().__init__(message)
