"""Tokenizer for the textual X-language form. Strips `//` comments."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .diagnostics import ParseError, SourceSpan, error

NUMBER_RE = re.compile(r"\d+(\.\d+)?([eE][+-]?\d+)?")
IDENT_START = re.compile(r"[A-Za-z_]")
IDENT_BODY = re.compile(r"[A-Za-z0-9_]")

TWO_CHAR = ("<=", ">=", "==", "!=")
ONE_CHAR = set("().,;:=<>+-*/!")


@dataclass(frozen=True)
class Token:
    type: str  # "ident" | "number" | "string" | "punct" | "eof"
    text: str
    line: int
    col: int

    @property
    def span(self) -> SourceSpan:
        # file is attached when tokens are produced through tokenize()
        return SourceSpan(self._file, self.line, self.col, self.line, self.col + max(len(self.text), 1))

    _file: str = "<input>"


def tokenize(source: str, file: str = "<input>") -> list[Token]:
    """Lex the full source; raises ParseError on an unexpected character."""
    tokens: list[Token] = []
    line, col, i = 1, 1, 0
    n = len(source)

    def make(type_: str, text: str, l: int, c: int) -> Token:
        return Token(type_, text, l, c, file)

    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "/":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if IDENT_START.match(ch):
            start = i
            while i < n and IDENT_BODY.match(source[i]):
                i += 1
            text = source[start:i]
            tokens.append(make("ident", text, line, col))
            col += len(text)
            continue
        if ch.isdigit():
            m = NUMBER_RE.match(source, i)
            text = m.group(0)
            tokens.append(make("number", text, line, col))
            i = m.end()
            col += len(text)
            continue
        if ch == '"':
            start = i
            i += 1
            while i < n and source[i] not in ('"', "\n"):
                i += 1
            if i >= n or source[i] != '"':
                span = SourceSpan(file, line, col, line, col + 1)
                raise ParseError(error("lex/unterminated-string", "unterminated string literal", span))
            i += 1
            text = source[start:i]
            tokens.append(make("string", text, line, col))
            col += len(text)
            continue
        two = source[i : i + 2]
        if two in TWO_CHAR:
            tokens.append(make("punct", two, line, col))
            i += 2
            col += 2
            continue
        if ch in ONE_CHAR:
            tokens.append(make("punct", ch, line, col))
            i += 1
            col += 1
            continue
        span = SourceSpan(file, line, col, line, col + 1)
        raise ParseError(
            error("lex/unexpected-char", f"unexpected character {ch!r}", span),
            expected="token",
            found=ch,
        )

    tokens.append(make("eof", "", line, col))
    return tokens
