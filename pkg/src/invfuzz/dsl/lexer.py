"""Tokenizer for the rule language."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .ast import SourceSpan
from .errors import ParseError

KEYWORDS = {
    "forall",
    "exists",
    "in",
    "if",
    "then",
    "else",
    "and",
    "or",
    "true",
    "false",
    "int",
    "float",
    "bool",
    "dtype",
    "str",
    "tensor",
    "list",
    "tuple",
}

_PUNCT = [
    "|=",
    "<=",
    ">=",
    "!=",
    "==",
    "{",
    "}",
    ":",
    ",",
    "(",
    ")",
    "[",
    "]",
    "|",
    "+",
    "-",
    "*",
    "/",
    "=",
    "<",
    ">",
    ".",
]


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "keyword" | "number" | "string" | punctuation | "eof"
    text: str
    span: SourceSpan
    value: object = None  # numeric value for numbers, unescaped text for strings


def line_col(text: str, offset: int) -> tuple[int, int]:
    """1-based line and column for a byte offset."""
    line = text.count("\n", 0, offset) + 1
    nl = text.rfind("\n", 0, offset)
    return line, offset - nl


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            is_float = False
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                is_float = True
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    is_float = True
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lexeme = text[i:j]
            frac = Fraction(lexeme)
            value: object = int(frac) if frac.denominator == 1 else frac
            tokens.append(Token("number", lexeme, SourceSpan(i, j), value))
            i = j
            continue
        if c == '"':
            j = i + 1
            out: list[str] = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    esc = text[j + 1]
                    if esc not in ('"', "\\"):
                        raise ParseError(
                            f"unsupported escape \\{esc}", SourceSpan(j, j + 2), text
                        )
                    out.append(esc)
                    j += 2
                else:
                    out.append(text[j])
                    j += 1
            if j >= n:
                raise ParseError("unterminated string literal", SourceSpan(i, n), text)
            tokens.append(Token("string", text[i : j + 1], SourceSpan(i, j + 1), "".join(out)))
            i = j + 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "keyword" if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, SourceSpan(i, j)))
            i = j
            continue
        for punct in _PUNCT:
            if text.startswith(punct, i):
                canon = "=" if punct == "==" else punct
                tokens.append(Token(canon, punct, SourceSpan(i, i + len(punct))))
                i += len(punct)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", SourceSpan(i, i + 1), text)
    tokens.append(Token("eof", "", SourceSpan(n, n)))
    return tokens
