from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field


class ParseError(Exception):
    """A syntax or semantic error in a design program, located at line/column (1-based)."""

    def __init__(self, line: int, column: int, message: str, expected: list[str] | None = None):
        self.line = line
        self.column = column
        self.message = message
        self.expected = list(expected or [])
        super().__init__(f"{line}:{column}: {message}")


class TokenKind(enum.Enum):
    IDENT = "identifier"
    INT = "integer"
    STRING = "string"
    EQ = "'='"
    TILDE = "'~'"
    COLON = "':'"
    COMMA = "','"
    LBRACE = "'{'"
    RBRACE = "'}'"
    LBRACK = "'['"
    RBRACK = "']'"
    LPAREN = "'('"
    RPAREN = "')'"
    EOF = "end of input"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    value: str | int | None
    line: int = field(compare=False)
    column: int = field(compare=False)

    def __repr__(self) -> str:
        if self.value is None:
            return self.kind.name
        return f"{self.kind.name}({self.value})"


_PUNCT = {
    "=": TokenKind.EQ, "~": TokenKind.TILDE, ":": TokenKind.COLON, ",": TokenKind.COMMA,
    "{": TokenKind.LBRACE, "}": TokenKind.RBRACE, "[": TokenKind.LBRACK, "]": TokenKind.RBRACK,
    "(": TokenKind.LPAREN, ")": TokenKind.RPAREN,
}

_SCANNER = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>[=~:,{}\[\]()])
""", re.VERBOSE)

MAX_INT_DIGITS = 20

_ESCAPE = re.compile(r"\\(.)")


def _unescape(body: str, line: int, column: int) -> str:
    def sub(m: re.Match) -> str:
        if m.group(1) not in '"\\':
            col = column + 1 + m.start()
            raise ParseError(line, col, f"invalid escape '\\{m.group(1)}' in string")
        return m.group(1)
    return _ESCAPE.sub(sub, body)


def tokenize(source: str) -> list[Token]:
    """Split a program into tokens, skipping whitespace and `#` comments.

    The returned list has no end-of-input token.
    """
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    end = len(source)
    while pos < end:
        col = pos - line_start + 1
        m = _SCANNER.match(source, pos)
        if m is None:
            ch = source[pos]
            if ch == '"':
                raise ParseError(line, col, "unterminated string", ['"'])
            raise ParseError(line, col, f"illegal character {ch!r}")
        kind = m.lastgroup
        text = m.group()
        if kind == "ident":
            tokens.append(Token(TokenKind.IDENT, text, line, col))
        elif kind == "int":
            if len(text.lstrip("0")) > MAX_INT_DIGITS:
                raise ParseError(line, col, "integer literal too large")
            tokens.append(Token(TokenKind.INT, int(text.lstrip("0") or "0"), line, col))
        elif kind == "string":
            tokens.append(Token(TokenKind.STRING, _unescape(text[1:-1], line, col), line, col))
        elif kind == "punct":
            tokens.append(Token(_PUNCT[text], None, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    return tokens
