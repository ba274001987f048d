"""Source spans, diagnostics, and the toolkit's error hierarchy."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass(frozen=True)
class SourceSpan:
    """A contiguous region of one source file, 1-based, start <= end."""

    file: str = "<input>"
    start_line: int = 1
    start_col: int = 1
    end_line: int = 1
    end_col: int = 1

    def __post_init__(self):
        if (self.end_line, self.end_col) < (self.start_line, self.start_col):
            raise ValueError("span end precedes start")

    def __str__(self) -> str:
        return f"{self.file}:{self.start_line}:{self.start_col}"

    def to_dict(self) -> dict:
        return {
            "file": self.file,
            "start_line": self.start_line,
            "start_col": self.start_col,
            "end_line": self.end_line,
            "end_col": self.end_col,
        }


@dataclass
class Diagnostic:
    """One machine-readable finding: {severity, code, span, message}."""

    severity: Severity
    code: str
    message: str
    span: SourceSpan | None = None
    # Free-form attribution, e.g. {"section": "state", "unit": "AutoPilot"}.
    data: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "severity": self.severity.value,
            "code": self.code,
            "message": self.message,
            "span": self.span.to_dict() if self.span else None,
        }
        if self.data:
            out["data"] = dict(sorted(self.data.items()))
        return out

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span else ""
        return f"{where}{self.severity.value}[{self.code}]: {self.message}"


def error(code: str, message: str, span: SourceSpan | None = None, **data) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, span, dict(data))


def warning(code: str, message: str, span: SourceSpan | None = None, **data) -> Diagnostic:
    return Diagnostic(Severity.WARNING, code, message, span, dict(data))


class XlangError(Exception):
    """Base class for all controlled toolkit failures."""


class ParseError(XlangError):
    """Lexical, syntactic, or unit-local semantic fault in X source."""

    def __init__(self, diagnostic: Diagnostic, expected: str | None = None, found: str | None = None):
        self.diagnostic = diagnostic
        self.expected = expected
        self.found = found
        super().__init__(str(diagnostic))

    @property
    def span(self) -> SourceSpan | None:
        return self.diagnostic.span


class MissingEnd(ParseError):
    """A unit or block was not closed with `end;`."""


class LinkError(XlangError):
    """Cross-unit resolution failed; carries every collected failure."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics) or "link failed")


class RuntimeFault(XlangError):
    """Simulation-time failure inside one model instance."""

    def __init__(self, time: float, part_path: str, cause: str):
        self.time = time
        self.part_path = part_path
        self.cause = cause
        super().__init__(f"t={time} {part_path or '<top>'}: {cause}")


class BackendFailure(XlangError):
    """A generator or tagger backend could not produce a usable response."""


class BackendUnavailable(BackendFailure):
    """A remote backend could not be reached."""
