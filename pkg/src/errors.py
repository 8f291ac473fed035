"""Source spans, diagnostics and the exception hierarchy shared by every stage."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


@dataclass(frozen=True, order=True)
class SourceSpan:
    """Position of a construct in its source document (1-based)."""

    line: int
    column: int
    length: int = 0

    def __post_init__(self) -> None:
        if self.line < 1 or self.column < 1 or self.length < 0:
            raise ValueError(f"invalid span {self.line}:{self.column}+{self.length}")

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class Severity(IntEnum):
    INFO = 0
    WARNING = 1
    ERROR = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    span: SourceSpan | None = None
    element: str = ""

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def sort_key(self) -> tuple:
        where = (self.span.line, self.span.column) if self.span else (0, 0)
        return (where, self.element, self.code, self.message)

    def format(self, path: str = "") -> str:
        """Render as `path:line:col: severity CODE: message`."""
        prefix = path
        if self.span:
            prefix = f"{prefix}:{self.span}" if prefix else str(self.span)
        head = f"{prefix}: " if prefix else ""
        where = f" [{self.element}]" if self.element and not self.span else ""
        return f"{head}{self.severity.label} {self.code}: {self.message}{where}"


def sort_diagnostics(diagnostics: list[Diagnostic]) -> list[Diagnostic]:
    return sorted(diagnostics, key=Diagnostic.sort_key)


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)


class GdprtmError(Exception):
    """Base error; `code` is a stable identifier for callers and exit-code mapping."""

    code = "E_GDPRTM"

    def __init__(self, message: str, code: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        if code:
            self.code = code


class ParseError(GdprtmError):
    code = "E_SYNTAX"

    def __init__(
        self,
        message: str,
        span: SourceSpan,
        expected: tuple[str, ...] = (),
        code: str | None = None,
    ) -> None:
        super().__init__(message, code)
        self.span = span
        self.expected = expected
        self.path = ""

    def __str__(self) -> str:
        hint = f" (expected {', '.join(self.expected)})" if self.expected else ""
        return f"{self.span}: {self.message}{hint}"

    def to_diagnostic(self) -> Diagnostic:
        hint = f" (expected {', '.join(self.expected)})" if self.expected else ""
        return Diagnostic(Severity.ERROR, self.code, self.message + hint, self.span)


class ExtractionError(GdprtmError):
    code = "E_ANNOTATION_ROLE_MISMATCH"

    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        first = diagnostics[0].message if diagnostics else "fact extraction failed"
        super().__init__(first)
        self.diagnostics = diagnostics


class InferenceError(GdprtmError):
    code = "E_INFERENCE"

    def __init__(self, message: str, code: str, diagnostics: list[Diagnostic] | None = None) -> None:
        super().__init__(message, code)
        self.diagnostics = diagnostics or []


class PackNotFoundError(GdprtmError):
    code = "E_PACK_NOT_FOUND"
