"""The `.ged` design language: tokens, parser, pretty-printer and lowering to verbs."""

from .ast import (
    AllotDecl,
    AssignDecl,
    Command,
    Count,
    DesignSpec,
    Labels,
    NestedIn,
    Pos,
    RcrdDecl,
    TrtDecl,
    UnitDecl,
    nested_in,
)
from .lexer import ParseError, Token, TokenKind, tokenize
from .lower import lower
from .parser import parse
from .printer import format_spec

__all__ = [
    "AllotDecl", "AssignDecl", "Command", "Count", "DesignSpec", "Labels", "NestedIn", "Pos",
    "RcrdDecl", "TrtDecl", "UnitDecl", "nested_in", "ParseError", "Token", "TokenKind",
    "tokenize", "lower", "parse", "format_spec",
]
