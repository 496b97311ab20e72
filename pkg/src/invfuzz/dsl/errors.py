"""Diagnostics shared by the parser and type checker."""

from __future__ import annotations

from dataclasses import dataclass, field

from .ast import SourceSpan


def _line_col(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    nl = text.rfind("\n", 0, offset)
    return line, offset - nl


class ParseError(Exception):
    """Malformed syntax. Carries the offending span and line/column."""

    def __init__(self, message: str, span: SourceSpan, source: str = ""):
        self.span = span
        self.line, self.col = _line_col(source, span.start) if source else (1, span.start + 1)
        self.token = source[span.start : span.end] if source else ""
        super().__init__(f"{self.line}:{self.col}: {message}")


class BindingError(Exception):
    """Variable binding problem: unbound free variable, duplicate binding,
    or quantifier shadowing."""

    def __init__(self, message: str, span: SourceSpan = SourceSpan(0, 0)):
        self.span = span
        super().__init__(message)


@dataclass
class TypeErrorEntry:
    kind: str
    message: str
    span: SourceSpan


@dataclass
class TypeErrorReport(Exception):
    """All type errors found in one rule; never stops at the first."""

    entries: list[TypeErrorEntry] = field(default_factory=list)
    warnings: list[TypeErrorEntry] = field(default_factory=list)

    def kinds(self) -> list[str]:
        return [e.kind for e in self.entries]

    def __str__(self) -> str:
        return "; ".join(f"{e.kind}@{e.span.start}: {e.message}" for e in self.entries)
