"""Recursive-descent parser for `.ged` design programs.

Grammar::

    program    = "design" [ string ] "{" block* "}" ;
    block      = units | trts | rcrds | allot | assign ;
    units      = "units" "{" { unitdecl } "}" ;
    unitdecl   = ident "=" ( int | labellist | nested ) ;
    nested     = "nested_in" "(" ident "," ( int | permap { "," permap } ) ")" ;
    permap     = ( int | string ) "~" int ;
    trts       = "trts" "{" { ident "=" ( int | labellist ) } "}" ;
    labellist  = "[" string { "," string } "]" ;
    rcrds      = "rcrds" "{" { ident "on" ident } "}" ;
    allot      = "allot" "{" { crossing "~" ident } "}" ;
    crossing   = ident { ":" ident } ;
    assign     = "assign" orderlist [ "seed" int ] ;
    orderlist  = order | "[" order { "," order } "]" ;
    order      = "random" | "systematic" ;

Keywords are contextual, so any identifier may also name a factor.
Declarations inside a block may be separated by commas.
"""

from __future__ import annotations

import re

from ..model import MAX_LEVELS, Order
from ..rng import MASK64
from .ast import (
    AllotDecl,
    AssignDecl,
    Count,
    DesignSpec,
    Labels,
    NestedIn,
    Pos,
    RcrdDecl,
    TrtDecl,
    UnitDecl,
)
from .lexer import ParseError, Token, TokenKind, tokenize

BLOCKS = ("units", "trts", "rcrds", "allot", "assign")
ORDERS = tuple(o.value for o in Order)


def _describe(tok: Token) -> str:
    if tok.kind is TokenKind.EOF:
        return "end of input"
    if tok.kind is TokenKind.STRING:
        return f"string {tok.value!r}"
    if tok.kind in (TokenKind.IDENT, TokenKind.INT):
        return f"{tok.kind.value} '{tok.value}'"
    return tok.kind.value


def _at(pos: Pos, message: str) -> ParseError:
    return ParseError(pos.line, pos.column, message)


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        lines = source.split("\n")
        self.toks.append(Token(TokenKind.EOF, None, len(lines), len(lines[-1]) + 1))
        self.i = 0
        # optional tokens that were looked for and skipped at token index `skipped[0]`
        self.skipped: tuple[int, list[str]] = (-1, [])
        self.title: str | None = None
        # declarations with positions of their sub-parts, in source order
        self.units: list[tuple[UnitDecl, dict]] = []
        self.trts: list[tuple[TrtDecl, dict]] = []
        self.rcrds: list[tuple[RcrdDecl, dict]] = []
        self.allots: list[tuple[AllotDecl, dict]] = []
        self.assigns: list[tuple[AssignDecl, dict]] = []

    # token helpers

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def pos(self) -> Pos:
        tok = self.peek()
        return Pos(tok.line, tok.column)

    def advance(self) -> Token:
        tok = self.peek()
        if tok.kind is not TokenKind.EOF:
            self.i += 1
        return tok

    def optional(self, *descriptions: str) -> None:
        """Note tokens that would have been accepted here before moving on without them."""
        if self.skipped[0] != self.i:
            self.skipped = (self.i, [])
        self.skipped[1].extend(d for d in descriptions if d not in self.skipped[1])

    def fail(self, expected: list[str], message: str | None = None):
        tok = self.peek()
        if self.skipped[0] == self.i:
            expected = self.skipped[1] + [e for e in expected if e not in self.skipped[1]]
        if message is None:
            message = f"expected {' or '.join(expected)}, found {_describe(tok)}"
        raise ParseError(tok.line, tok.column, message, expected)

    def expect(self, kind: TokenKind) -> Token:
        if self.peek().kind is not kind:
            self.fail([kind.value])
        return self.advance()

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind is TokenKind.IDENT and tok.value == word

    def keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            self.fail([f"'{word}'"])
        return self.advance()

    def ident(self) -> tuple[str, Pos]:
        p = self.pos()
        return self.expect(TokenKind.IDENT).value, p

    def skip_comma(self) -> None:
        if self.peek().kind is TokenKind.COMMA:
            self.advance()
        else:
            self.optional("','")

    def more(self, kind: TokenKind) -> bool:
        """Consume a separator if present; otherwise record that it was possible."""
        if self.peek().kind is kind:
            self.advance()
            return True
        self.optional(kind.value)
        return False

    # grammar rules

    def program(self) -> None:
        self.keyword("design")
        if self.peek().kind is TokenKind.STRING:
            self.title = self.advance().value
        else:
            self.optional("string")
        self.expect(TokenKind.LBRACE)
        while self.peek().kind is not TokenKind.RBRACE:
            tok = self.peek()
            if tok.kind is TokenKind.IDENT and tok.value in BLOCKS:
                getattr(self, f"block_{tok.value}")()
            elif tok.kind is TokenKind.IDENT:
                self.fail([f"'{b}'" for b in BLOCKS] + ["'}'"], f"unknown block '{tok.value}'")
            else:
                self.fail(["block name", "'}'"])
        self.advance()
        self.expect(TokenKind.EOF)

    def decls(self, one) -> None:
        self.expect(TokenKind.LBRACE)
        while self.peek().kind is not TokenKind.RBRACE:
            if self.peek().kind is not TokenKind.IDENT:
                self.fail(["identifier", "'}'"])
            one()
            self.skip_comma()
        self.advance()

    def block_units(self) -> None:
        self.advance()
        self.decls(self.unitdecl)

    def unitdecl(self) -> None:
        name, p = self.ident()
        self.expect(TokenKind.EQ)
        info: dict = {"value": self.pos()}
        tok = self.peek()
        if tok.kind is TokenKind.INT:
            spec = Count(self.advance().value)
        elif tok.kind is TokenKind.LBRACK:
            spec = Labels(self.labellist(info))
        elif self.at_keyword("nested_in"):
            spec = self.nested(info)
        else:
            self.fail(["integer", "'['", "'nested_in'"])
        self.units.append((UnitDecl(name, spec, p), info))

    def nested(self, info: dict) -> NestedIn:
        self.advance()
        self.expect(TokenKind.LPAREN)
        parent, info["parent"] = self.ident()
        self.expect(TokenKind.COMMA)
        info["counts"] = []
        if self.peek().kind is TokenKind.INT and self.peek(1).kind is not TokenKind.TILDE:
            info["counts"].append(self.pos())
            counts = self.advance().value
            self.optional("'~'")
        else:
            pairs = [self.permap(info)]
            while self.more(TokenKind.COMMA):
                pairs.append(self.permap(info))
            counts = tuple(pairs)
        info["close"] = self.pos()
        self.expect(TokenKind.RPAREN)
        return NestedIn(parent, counts)

    def permap(self, info: dict) -> tuple[int | str, int]:
        info.setdefault("keys", []).append(self.pos())
        tok = self.peek()
        if tok.kind not in (TokenKind.INT, TokenKind.STRING):
            self.fail(["integer", "string"])
        key = self.advance().value
        self.expect(TokenKind.TILDE)
        info["counts"].append(self.pos())
        return key, self.expect(TokenKind.INT).value

    def labellist(self, info: dict) -> tuple[str, ...]:
        self.expect(TokenKind.LBRACK)
        info["labels"] = [self.pos()]
        labels = [self.expect(TokenKind.STRING).value]
        while self.more(TokenKind.COMMA):
            info["labels"].append(self.pos())
            labels.append(self.expect(TokenKind.STRING).value)
        self.expect(TokenKind.RBRACK)
        return tuple(labels)

    def block_trts(self) -> None:
        self.advance()
        self.decls(self.trtdecl)

    def trtdecl(self) -> None:
        name, p = self.ident()
        self.expect(TokenKind.EQ)
        info: dict = {"value": self.pos()}
        tok = self.peek()
        if tok.kind is TokenKind.INT:
            spec = Count(self.advance().value)
        elif tok.kind is TokenKind.LBRACK:
            spec = Labels(self.labellist(info))
        else:
            self.fail(["integer", "'['"])
        self.trts.append((TrtDecl(name, spec, p), info))

    def block_rcrds(self) -> None:
        self.advance()
        self.decls(self.rcrddecl)

    def rcrddecl(self) -> None:
        name, p = self.ident()
        self.keyword("on")
        unit, unit_pos = self.ident()
        self.rcrds.append((RcrdDecl(name, unit, p), {"unit": unit_pos}))

    def block_allot(self) -> None:
        self.advance()
        self.decls(self.allotdecl)

    def allotdecl(self) -> None:
        p = self.pos()
        first, first_pos = self.ident()
        sources, source_pos = [first], [first_pos]
        while self.peek().kind is TokenKind.COLON:
            self.advance()
            name, name_pos = self.ident()
            sources.append(name)
            source_pos.append(name_pos)
        if self.peek().kind is not TokenKind.TILDE:
            self.fail(["':'", "'~'"])
        self.advance()
        target, target_pos = self.ident()
        self.allots.append((AllotDecl(tuple(sources), target, p),
                            {"sources": source_pos, "target": target_pos}))

    def block_assign(self) -> None:
        p = self.pos()
        self.advance()
        if self.peek().kind is TokenKind.LBRACK:
            self.advance()
            orders = [self.order()]
            while self.more(TokenKind.COMMA):
                orders.append(self.order())
            self.expect(TokenKind.RBRACK)
        elif self.peek().kind is TokenKind.IDENT:
            orders = [self.order()]
        else:
            self.fail([f"'{o}'" for o in ORDERS] + ["'['"])
        info: dict = {}
        seed = None
        if self.at_keyword("seed"):
            self.advance()
            info["seed"] = self.pos()
            seed = self.expect(TokenKind.INT).value
        else:
            self.optional("'seed'")
        self.assigns.append((AssignDecl(tuple(orders), seed, p), info))

    def order(self) -> Order:
        tok = self.peek()
        if tok.kind is TokenKind.IDENT and tok.value in ORDERS:
            self.advance()
            return Order(tok.value)
        self.fail([f"'{o}'" for o in ORDERS])

    # semantic checks

    def check(self) -> None:
        declared: dict[str, tuple[str, Pos]] = {}
        everything = ([(d.name, "unit", d.pos) for d, _ in self.units]
                      + [(d.name, "treatment", d.pos) for d, _ in self.trts]
                      + [(d.name, "record", d.pos) for d, _ in self.rcrds])
        for name, role, p in sorted(everything, key=lambda x: (x[2].line, x[2].column)):
            if name in declared:
                first = declared[name][1]
                raise _at(p, f"factor '{name}' is already declared at line {first.line}")
            declared[name] = (role, p)

        def expect_role(name: str, role: str, p: Pos, what: str) -> None:
            if name not in declared:
                raise _at(p, f"undeclared {role} '{name}' in {what}")
            if declared[name][0] != role:
                raise _at(p, f"'{name}' is a {declared[name][0]}, not a {role}, in {what}")

        sizes: dict[str, tuple[int, list[str] | None]] = {}
        total = 0
        for d, info in self.units:
            spec = d.spec
            if isinstance(spec, Count):
                self.check_count(spec.n, info["value"])
                sizes[d.name] = (spec.n, None)
            elif isinstance(spec, Labels):
                self.check_labels(spec.labels, info["labels"])
                sizes[d.name] = (len(spec.labels), list(spec.labels))
            else:
                if spec.parent not in sizes:
                    if declared.get(spec.parent, ("",))[0] == "unit":
                        raise _at(info["parent"], f"parent unit '{spec.parent}' must be declared before '{d.name}'")
                    expect_role(spec.parent, "unit", info["parent"], f"nesting of '{d.name}'")
                n = self.check_nested(d, info, sizes[spec.parent])
                sizes[d.name] = (n, None)
            total += sizes[d.name][0]
            if total > MAX_LEVELS:
                raise _at(d.pos, f"design would exceed {MAX_LEVELS} levels")

        for d, info in self.trts:
            if isinstance(d.spec, Count):
                self.check_count(d.spec.n, info["value"])
                total += d.spec.n
            else:
                self.check_labels(d.spec.labels, info["labels"])
                total += len(d.spec.labels)
            if total > MAX_LEVELS:
                raise _at(d.pos, f"design would exceed {MAX_LEVELS} levels")

        for d, info in self.rcrds:
            expect_role(d.unit, "unit", info["unit"], f"record '{d.name}'")

        allotted: dict[str, Pos] = {}
        for d, info in self.allots:
            for name, p in zip(d.sources, info["sources"]):
                expect_role(name, "treatment", p, "allotment")
                if name in allotted:
                    raise _at(p, f"treatment '{name}' is already allotted at line {allotted[name].line}")
                allotted[name] = p
            expect_role(d.target, "unit", info["target"], "allotment")

        if len(self.assigns) > 1:
            raise _at(self.assigns[1][0].pos, "only one assign clause is allowed")
        for d, info in self.assigns:
            if not self.allots:
                raise _at(d.pos, "assign needs at least one allotment")
            if len(d.orders) not in (1, len(self.allots)):
                raise _at(d.pos, f"{len(d.orders)} orders given for {len(self.allots)} allotments")
            if d.seed is not None and d.seed > MASK64:
                raise _at(info["seed"], "seed must be below 2**64")

    @staticmethod
    def check_count(n: int, p: Pos) -> None:
        if n < 1:
            raise _at(p, "count must be a positive integer")

    @staticmethod
    def check_labels(labels: tuple[str, ...], positions: list[Pos]) -> None:
        seen = set()
        for label, p in zip(labels, positions):
            if label in seen:
                raise _at(p, f"duplicate label {label!r}")
            seen.add(label)

    def check_nested(self, d: UnitDecl, info: dict, parent: tuple[int, list[str] | None]) -> int:
        spec: NestedIn = d.spec
        parent_n, parent_labels = parent
        if isinstance(spec.counts, int):
            self.check_count(spec.counts, info["counts"][0])
            return parent_n * spec.counts
        generated = re.compile(rf"{re.escape(spec.parent)}([1-9][0-9]*)")
        seen: dict[int, Pos] = {}
        key_type = type(spec.counts[0][0])
        for (key, n), key_pos, count_pos in zip(spec.counts, info["keys"], info["counts"]):
            if type(key) is not key_type:
                raise _at(key_pos, "per-parent keys must be all ordinals or all labels")
            if isinstance(key, int):
                idx = key if 1 <= key <= parent_n else None
            elif parent_labels is not None:
                idx = parent_labels.index(key) + 1 if key in parent_labels else None
            else:
                m = generated.fullmatch(key)
                idx = int(m.group(1)) if m and int(m.group(1)) <= parent_n else None
            if idx is None:
                raise _at(key_pos, f"'{spec.parent}' has no level {key!r}")
            if idx in seen:
                raise _at(key_pos, f"parent level {key!r} is given more than once")
            seen[idx] = key_pos
            self.check_count(n, count_pos)
        if len(seen) != parent_n:
            missing = [i for i in range(1, parent_n + 1) if i not in seen]
            shown = ", ".join(map(str, missing[:5])) + (", ..." if len(missing) > 5 else "")
            raise _at(info["close"], f"no count for level(s) {shown} of '{spec.parent}'")
        return sum(n for _, n in spec.counts)

    def spec(self) -> DesignSpec:
        return DesignSpec(
            title=self.title,
            unit_decls=tuple(d for d, _ in self.units),
            trt_decls=tuple(d for d, _ in self.trts),
            rcrd_decls=tuple(d for d, _ in self.rcrds),
            allot_decls=tuple(d for d, _ in self.allots),
            assign_decl=self.assigns[0][0] if self.assigns else None,
        )


def parse(source: str) -> DesignSpec:
    """Parse and check a design program; raises ParseError with a position on failure."""
    parser = _Parser(source)
    parser.program()
    parser.check()
    return parser.spec()
