"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class GridShiftError(Exception):
    exit_code = 1


class ValidationError(GridShiftError, ValueError):
    """Input violates a documented invariant."""


class ParseError(ValidationError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ContinuityError(ValidationError):
    def __init__(self, message, index):
        super().__init__(f"index {index}: {message}")
        self.index = index


class DomainError(ValidationError):
    pass


class InstanceTooLargeError(ValidationError):
    pass


class DataError(ValidationError):
    pass


class InfeasibleError(GridShiftError):
    """No dispatch/allocation satisfies the constraints."""

    exit_code = 2

    def __init__(self, message, hour=None):
        if hour is not None:
            message = f"hour {hour}: {message}"
        super().__init__(message)
        self.hour = hour


class ContractError(GridShiftError):
    """A phase handed the next one data that breaks its precondition."""
