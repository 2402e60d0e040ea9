"""Exception hierarchy shared across the toolkit."""
from __future__ import annotations


class PerfPromptError(Exception):
    """Base class for all toolkit errors."""


class ParseError(PerfPromptError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class UnknownMethod(PerfPromptError, KeyError):
    pass


class UnknownIdentifier(PerfPromptError, KeyError):
    pass


class MissingPlaceholder(PerfPromptError):
    pass


class RuleConfigError(PerfPromptError):
    pass


class GatewayError(PerfPromptError):
    pass


class GatewayTimeout(GatewayError):
    pass


class EndpointError(GatewayError):
    pass


class FixtureMiss(GatewayError):
    def __init__(self, prompt_hash: str) -> None:
        super().__init__(f"no mock fixture for prompt hash {prompt_hash}")
        self.prompt_hash = prompt_hash


class CorruptRecord(PerfPromptError):
    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyDatabase(PerfPromptError):
    pass


class TooManyExamples(PerfPromptError):
    pass


class CompileError(PerfPromptError):
    def __init__(self, diagnostics: str, command: list[str]) -> None:
        super().__init__("compilation failed")
        self.diagnostics = diagnostics
        self.command = command


class NonpositiveTime(PerfPromptError, ValueError):
    pass


class ConfigError(PerfPromptError):
    pass
