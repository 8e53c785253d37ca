"""Exception types shared across the package."""

from __future__ import annotations


class RepairKitError(Exception):
    """Base class for all errors raised by repairkit."""


class UnterminatedLiteral(RepairKitError, ValueError):
    def __init__(self, line: int, message: str = "unterminated string literal"):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ParseFailure(RepairKitError, ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path}:" if path else ""
        where += f"{line}: " if line is not None else (" " if path else "")
        super().__init__(f"{where}{message}")
        self.line = line
        self.path = path


class NotFound(RepairKitError, LookupError):
    pass


class Ambiguous(RepairKitError, LookupError):
    pass


class ToolUnavailable(RepairKitError, RuntimeError):
    pass


class BudgetTooSmall(RepairKitError, ValueError):
    pass


class DegenerateMutation(RepairKitError):
    """The mutation normalizes to the original text (or has no usable replacement)."""


class SyntaxBroken(RepairKitError):
    def __init__(self, line: int | None, message: str = ""):
        super().__init__(f"mutated source fails syntax check at line {line}: {message}")
        self.line = line


class SuiteTimeout(RepairKitError):
    pass


class CommandNotFound(RepairKitError):
    pass


class NoCoveringTests(RepairKitError):
    pass


class BaselineFailure(RepairKitError):
    """The unmodified project does not pass its own test suite."""


class UnrecognizedTraceFormat(RepairKitError, ValueError):
    def __init__(self, raw: str, message: str = "unrecognized trace format"):
        super().__init__(message)
        self.raw = raw


class NoProjectFrames(RepairKitError):
    pass


class NoSuspects(RepairKitError, ValueError):
    pass


class GeneratorUnavailable(RepairKitError):
    pass


class ProtocolError(RepairKitError):
    pass


class SandboxFailure(RepairKitError):
    pass


class InsufficientCoverage(RepairKitError):
    pass
