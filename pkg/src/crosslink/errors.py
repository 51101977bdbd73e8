class CrosslinkError(Exception):
    """Base class for all library errors."""


class ParseError(CrosslinkError, ValueError):
    """Malformed input text or file content."""

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ConfigError(CrosslinkError, ValueError):
    """Invalid parameter or configuration value."""


class ContractError(CrosslinkError, ValueError):
    """A precondition of an operation was violated by the caller."""
