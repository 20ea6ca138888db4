"""Declaration types for design programs.

These are shared by the parser (which produces them) and the engine
(which consumes them). Source positions ride along for diagnostics but are
excluded from equality so that re-parsed programs compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from ..model import Order


@dataclass(frozen=True)
class Pos:
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


def _pos() -> Pos | None:
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Count:
    n: int


@dataclass(frozen=True)
class Labels:
    labels: tuple[str, ...]


@dataclass(frozen=True)
class NestedIn:
    """`counts` is either a uniform per-parent count or ((parent key, count), ...).

    Parent keys are 1-based ordinals (int) or parent level labels (str).
    """

    parent: str
    counts: int | tuple[tuple[int | str, int], ...]


UnitSpec = Union[Count, Labels, NestedIn]
TrtSpec = Union[Count, Labels]


@dataclass(frozen=True)
class UnitDecl:
    name: str
    spec: UnitSpec
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class TrtDecl:
    name: str
    spec: TrtSpec
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class RcrdDecl:
    name: str
    unit: str
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class AllotDecl:
    sources: tuple[str, ...]
    target: str
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class AssignDecl:
    orders: tuple[Order, ...]
    seed: int | None = None
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class DesignSpec:
    title: str | None = None
    unit_decls: tuple[UnitDecl, ...] = ()
    trt_decls: tuple[TrtDecl, ...] = ()
    rcrd_decls: tuple[RcrdDecl, ...] = ()
    allot_decls: tuple[AllotDecl, ...] = ()
    assign_decl: AssignDecl | None = None


@dataclass(frozen=True)
class Command:
    """One grammar verb applied to a design, e.g. ("set_units", (UnitDecl, ...))."""

    verb: str
    args: tuple


def nested_in(parent: str, *counts) -> NestedIn:
    """Build a nesting declaration.

    ``nested_in("patch", 3)`` gives three children per parent level;
    ``nested_in("experiment", {1: 21, 2: 20})`` or
    ``nested_in("experiment", (1, 21), (2, 20))`` gives per-parent counts.
    """
    if len(counts) == 1 and isinstance(counts[0], int):
        return NestedIn(parent, counts[0])
    if len(counts) == 1 and isinstance(counts[0], dict):
        return NestedIn(parent, tuple(counts[0].items()))
    return NestedIn(parent, tuple(tuple(c) for c in counts))
