"""Exception types shared across the package."""


class ArielError(Exception):
    pass


class DimensionError(ArielError, ValueError):
    pass


class DegenerateInputError(ArielError, ValueError):
    """Empty batch, single-row batch norm, empty readout segment, too-small split."""


class MissingDependencyError(ArielError, KeyError):
    """A requested variable does not influence the loss."""


class NumericError(ArielError, FloatingPointError):
    pass


class GraphValidationError(ArielError, ValueError):
    pass


class ParseError(ArielError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ArielError, ValueError):
    pass
