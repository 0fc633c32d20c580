"""Exception hierarchy shared by all modules."""


class HoloGraphError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    category = "error"
    exit_code = 1


class InvalidArgumentError(HoloGraphError, ValueError):
    category = "invalid-argument"
    exit_code = 2


class FormatError(HoloGraphError):
    """Malformed checkpoint or sample-store file."""

    category = "format"
    exit_code = 3

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(HoloGraphError, ArithmeticError):
    category = "numeric"
    exit_code = 4


class ConfigError(HoloGraphError, ValueError):
    category = "config"
    exit_code = 5


class ParseError(HoloGraphError):
    """Dataset file could not be parsed; carries file and line context."""

    category = "parse"
    exit_code = 6

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class MissingFileError(ParseError):
    pass


class NodeIdError(ParseError):
    """Edge endpoint outside the contiguous id range ``[0, V)``."""


class LabelRangeError(ParseError):
    pass
