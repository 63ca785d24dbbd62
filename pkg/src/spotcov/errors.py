"""Exception types shared across the package."""


class SpotcovError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SpotcovError, ValueError):
    """A caller-supplied value violates a precondition."""


class InvalidState(SpotcovError, RuntimeError):
    """A computation reached a state it cannot proceed from (e.g. a
    degenerate design matrix or a zero variance denominator)."""


class CsvFormatError(InvalidArgument):
    """A CSV file failed to parse; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")
