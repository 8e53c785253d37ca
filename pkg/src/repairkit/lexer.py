"""A small layout-preserving lexer for Python-like source.

Unlike :mod:`tokenize`, this never needs the file to be complete or correctly
indented: it only has to find the boundaries of comments, string literals,
numbers and identifiers. Everything else is passed through one character at a
time, so the original text can be rebuilt exactly by concatenating ``text``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

from repairkit.errors import UnterminatedLiteral

NAME = "name"
NUMBER = "number"
STRING = "string"
COMMENT = "comment"
NEWLINE = "newline"
SPACE = "space"
OP = "op"

_STRING_PREFIXES = {"r", "u", "b", "f", "br", "rb", "fr", "rf"}

_NUMBER_RE = re.compile(
    r"""
    0[xX](?:_?[0-9a-fA-F])+[lL]?
  | 0[oO](?:_?[0-7])+
  | 0[bB](?:_?[01])+
  | (?:
        \d(?:_?\d)*(?:\.(?:\d(?:_?\d)*)?)?
      | \.\d(?:_?\d)*
    )
    (?:[eE][+-]?\d(?:_?\d)*)?
    [jJlL]?
    """,
    re.VERBOSE,
)
_NAME_RE = re.compile(r"[^\W\d]\w*")
_SPACE_RE = re.compile(r"[ \t\f]+")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int
    line: int


def _scan_string(text: str, start: int, quote_at: int, line: int) -> int:
    """Return the offset one past the end of the string literal at ``quote_at``."""
    quote = text[quote_at]
    triple = text.startswith(quote * 3, quote_at)
    i = quote_at + (3 if triple else 1)
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\\":
            i += 2
            continue
        if triple:
            if text.startswith(quote * 3, i):
                return i + 3
        elif c == quote:
            return i + 1
        elif c == "\n":
            raise UnterminatedLiteral(line)
        i += 1
    raise UnterminatedLiteral(line)


def iter_tokens(text: str) -> Iterator[Token]:
    i = 0
    n = len(text)
    line = 1
    while i < n:
        c = text[i]
        if c == "\n":
            yield Token(NEWLINE, c, i, line)
            line += 1
            i += 1
            continue
        if c == "\r":
            # treat \r\n and lone \r as one newline
            j = i + 2 if text.startswith("\r\n", i) else i + 1
            yield Token(NEWLINE, text[i:j], i, line)
            line += 1
            i = j
            continue
        m = _SPACE_RE.match(text, i)
        if m:
            yield Token(SPACE, m.group(), i, line)
            i = m.end()
            continue
        if c == "#":
            j = i
            while j < n and text[j] not in "\r\n":
                j += 1
            yield Token(COMMENT, text[i:j], i, line)
            i = j
            continue
        if c in "'\"":
            j = _scan_string(text, i, i, line)
            tok = text[i:j]
            yield Token(STRING, tok, i, line)
            line += tok.count("\n")
            i = j
            continue
        m = _NAME_RE.match(text, i)
        if m:
            word = m.group()
            j = m.end()
            if j < n and text[j] in "'\"" and word.lower() in _STRING_PREFIXES:
                k = _scan_string(text, i, j, line)
                tok = text[i:k]
                yield Token(STRING, tok, i, line)
                line += tok.count("\n")
                i = k
                continue
            yield Token(NAME, word, i, line)
            i = j
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            m = _NUMBER_RE.match(text, i)
            if m and m.end() > i:
                yield Token(NUMBER, m.group(), i, line)
                i = m.end()
                continue
        yield Token(OP, c, i, line)
        i += 1
