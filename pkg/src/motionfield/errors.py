"""Exception hierarchy for motionfield.

Every error raised on purpose by the package derives from MotionFieldError and
carries the process exit code the CLI reports for it.
"""


class MotionFieldError(Exception):
    """Base exception for all motionfield errors."""

    exit_code: int = 1


class UsageError(MotionFieldError):
    """Raised when command-line flags or environment settings are invalid."""

    exit_code = 2


class ContractError(MotionFieldError, ValueError):
    """Raised when a caller violates an operation's precondition."""

    exit_code = 2


class DimensionError(ContractError):
    """Raised when tensor shapes are incompatible."""


class DomainError(MotionFieldError, ValueError):
    """Raised in checked mode when a value leaves its valid numeric domain."""

    exit_code = 2


class DegeneracyError(MotionFieldError, ValueError):
    """Raised when an input row admits no well-defined result."""

    exit_code = 2

    def __init__(self, message: str, row: int | None = None) -> None:
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


class DivergenceError(MotionFieldError):
    """Raised when a training loss becomes non-finite."""

    exit_code = 3

    def __init__(self, iteration: int, loss: float) -> None:
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"Loss diverged to {loss} at iteration {iteration}")


class FormatError(MotionFieldError):
    """Raised when a binary file does not match its declared layout."""

    exit_code = 4

    def __init__(self, message: str, offset: int) -> None:
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class ParseError(MotionFieldError):
    """Raised when a text file contains a malformed record."""

    exit_code = 4

    def __init__(self, message: str, line: int) -> None:
        self.line = line
        super().__init__(f"{message} on line {line}")
