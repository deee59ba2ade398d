from typing import List, Optional


class MoralLensError(Exception):
    """Base class for every error raised by the toolkit"""


class ContractViolation(MoralLensError, ValueError):
    """A precondition of an operation was not met (lengths, ranges, shapes)"""


class CombinatorialLimitError(ContractViolation):
    """An exhaustive oracle was asked to enumerate more masks than its guard allows"""


class ConfigError(MoralLensError, ValueError):
    pass


class HeadFormatError(MoralLensError, ValueError):
    pass


class DatasetError(MoralLensError, ValueError):

    def __init__(self, message: str, path: Optional[str] = None, line_numbers: Optional[List[int]] = None):
        self.path = path
        self.line_numbers = list(line_numbers or [])
        if self.line_numbers:
            lines = ", ".join(str(n) for n in self.line_numbers)
            message = f"{message} (line {lines})" if len(self.line_numbers) == 1 else f"{message} (lines {lines})"
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class BackendError(MoralLensError, RuntimeError):

    def __init__(self, message: str, role: str = "", endpoint: str = ""):
        self.role = role
        self.endpoint = endpoint
        where = f"{role}@{endpoint}" if endpoint else role
        super().__init__(f"[{where}] {message}" if where else message)
