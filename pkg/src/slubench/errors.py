"""Exception taxonomy shared by the whole package.

Contract violations (bad arguments, invariant breaches) map to CLI exit
code 1; file format and I/O problems map to exit code 2.
"""


class ContractError(ValueError):
    """An operation was called with inputs that violate its contract."""


class FormatError(ValueError):
    """A file or text payload does not conform to its declared format."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
