"""Core data structures: factors, levels, the factor and level graphs, and the design object.

A design is held in graph form as two directed acyclic graphs. The factor
graph relates factors (units nested in units, treatments allotted to units,
records measured on units). The level graph relates individual levels
(a plot level to its patch level, a fertilizer level to the plot level it
was assigned to). Edges always point from the dependent node to its target.
"""

from __future__ import annotations

import copy
import enum
import graphlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence


# Guard against programs that would allocate absurd numbers of levels.
MAX_LEVELS = 10_000_000


class DesignError(ValueError):
    """Raised when a grammar verb is given arguments it cannot apply."""


class Role(enum.Enum):
    TREATMENT = "treatment"
    UNIT = "unit"
    RECORD = "record"


class EdgeKind(enum.Enum):
    NESTED_IN = "nested_in"
    ALLOTTED_TO = "allotted_to"
    MEASURED_ON = "measured_on"


# (source role, target role) permitted for each edge kind
EDGE_ROLES: dict[EdgeKind, tuple[Role, Role]] = {
    EdgeKind.NESTED_IN: (Role.UNIT, Role.UNIT),
    EdgeKind.ALLOTTED_TO: (Role.TREATMENT, Role.UNIT),
    EdgeKind.MEASURED_ON: (Role.RECORD, Role.UNIT),
}


class ImplicitRole(enum.Enum):
    EXPERIMENTAL_UNIT = "experimental unit"
    OBSERVATIONAL_UNIT = "observational unit"
    NESTED_UNIT = "nested unit"


class Order(enum.Enum):
    RANDOM = "random"
    SYSTEMATIC = "systematic"


@dataclass(frozen=True)
class Factor:
    id: int
    name: str
    role: Role
    level_count: int = 0


@dataclass(frozen=True)
class Level:
    id: int
    factor: int
    label: str
    ordinal: int


@dataclass(frozen=True)
class FactorEdge:
    source: int
    target: int
    kind: EdgeKind


@dataclass(frozen=True)
class Allotment:
    sources: tuple[int, ...]
    target: int


@dataclass(frozen=True)
class AssignmentSpec:
    orders: tuple[Order, ...]
    seed: int = 0

    def order_for(self, index: int) -> Order:
        if len(self.orders) == 1:
            return self.orders[0]
        return self.orders[index]


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.subject}: {self.message}"


class FactorGraph:
    """Factors as nodes (kept in declaration order) and typed high-level edges."""

    def __init__(self) -> None:
        self.nodes: dict[int, Factor] = {}
        self.edges: list[FactorEdge] = []
        self._by_name: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[Factor]:
        return iter(self.nodes.values())

    def add(self, factor: Factor) -> Factor:
        self.nodes[factor.id] = factor
        self._by_name.setdefault(factor.name, factor.id)
        return factor

    def replace(self, factor: Factor) -> None:
        self.nodes[factor.id] = factor

    def add_edge(self, source: int, target: int, kind: EdgeKind) -> FactorEdge:
        edge = FactorEdge(source, target, kind)
        self.edges.append(edge)
        return edge

    def get(self, name: str) -> Factor | None:
        fid = self._by_name.get(name)
        return None if fid is None else self.nodes[fid]

    def with_role(self, role: Role) -> list[Factor]:
        return [f for f in self.nodes.values() if f.role is role]

    def edges_from(self, fid: int, kind: EdgeKind | None = None) -> list[FactorEdge]:
        return [e for e in self.edges if e.source == fid and (kind is None or e.kind is kind)]

    def edges_to(self, fid: int, kind: EdgeKind | None = None) -> list[FactorEdge]:
        return [e for e in self.edges if e.target == fid and (kind is None or e.kind is kind)]

    def parent(self, fid: int) -> Factor | None:
        """Nesting parent of a unit, if any."""
        for e in self.edges_from(fid, EdgeKind.NESTED_IN):
            return self.nodes[e.target]
        return None

    def children(self, fid: int) -> list[Factor]:
        return [self.nodes[e.source] for e in self.edges_to(fid, EdgeKind.NESTED_IN)]


class LevelGraph:
    """Levels as nodes and dependent-to-target edges between them."""

    def __init__(self) -> None:
        self.nodes: dict[int, Level] = {}
        self._by_factor: dict[int, list[int]] = defaultdict(list)
        self._out: dict[int, list[int]] = defaultdict(list)
        self._in: dict[int, list[int]] = defaultdict(list)

    def __len__(self) -> int:
        return len(self.nodes)

    def add(self, level: Level) -> Level:
        self.nodes[level.id] = level
        self._by_factor[level.factor].append(level.id)
        return level

    def add_edge(self, source: int, target: int) -> None:
        self._out[source].append(target)
        self._in[target].append(source)

    def remove_edges(self, pairs: Iterable[tuple[int, int]]) -> None:
        for source, target in pairs:
            self._out[source].remove(target)
            self._in[target].remove(source)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(s, t) for s in self.nodes for t in self._out.get(s, ())]

    def levels_of(self, fid: int) -> list[Level]:
        """Levels owned by a factor in ordinal order."""
        return sorted((self.nodes[i] for i in self._by_factor.get(fid, ())), key=lambda lv: lv.ordinal)

    def successors(self, lid: int) -> list[int]:
        return list(self._out.get(lid, ()))

    def predecessors(self, lid: int) -> list[int]:
        return list(self._in.get(lid, ()))


@dataclass
class Design:
    """The mutable design object that grammar verbs progressively build.

    The builder methods (`set_units`, `set_trts`, ...) mutate the design in
    place and return it so calls can be chained.
    """

    title: str | None = None
    factor_graph: FactorGraph = field(default_factory=FactorGraph)
    level_graph: LevelGraph = field(default_factory=LevelGraph)
    allotments: list[Allotment] = field(default_factory=list)
    assignment: AssignmentSpec | None = None
    seed: int | None = None
    _next_id: int = field(default=1, repr=False)

    def new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def copy(self) -> Design:
        return copy.deepcopy(self)

    def factor(self, ref: int | str | Factor) -> Factor:
        """Resolve a factor by id, name, or the factor itself."""
        if isinstance(ref, Factor):
            ref = ref.id
        if isinstance(ref, str):
            found = self.factor_graph.get(ref)
        else:
            found = self.factor_graph.nodes.get(ref)
        if found is None:
            raise DesignError(f"unknown factor {ref!r}")
        return found

    @property
    def factors(self) -> list[Factor]:
        return list(self.factor_graph)

    def levels(self, ref: int | str | Factor) -> list[Level]:
        return self.level_graph.levels_of(self.factor(ref).id)

    # fluent verbs; the work happens in the engine module
    def set_units(self, decls: Sequence = (), **named) -> Design:
        from . import engine
        return engine.set_units(self, decls, **named)

    def set_trts(self, decls: Sequence = (), **named) -> Design:
        from . import engine
        return engine.set_trts(self, decls, **named)

    def set_rcrds(self, decls: Sequence = (), **named) -> Design:
        from . import engine
        return engine.set_rcrds(self, decls, **named)

    def allot_trts(self, *allotments) -> Design:
        from . import engine
        return engine.allot_trts(self, *allotments)

    def assign_trts(self, order="random", seed: int = 0) -> Design:
        from . import engine
        return engine.assign_trts(self, order, seed)

    def serve_table(self):
        from . import serve
        return serve.serve_table(self)


def new_design(title: str | None = None) -> Design:
    return Design(title=title)


def implicit_role(design: Design, factor: int | str | Factor) -> frozenset[ImplicitRole]:
    """Roles a unit takes on from how other factors relate to it."""
    f = design.factor(factor)
    if f.role is not Role.UNIT:
        raise DesignError(f"factor {f.name!r} is a {f.role.value}, not a unit")
    graph = design.factor_graph
    tags = set()
    if graph.edges_to(f.id, EdgeKind.ALLOTTED_TO):
        tags.add(ImplicitRole.EXPERIMENTAL_UNIT)
    if graph.edges_to(f.id, EdgeKind.MEASURED_ON):
        tags.add(ImplicitRole.OBSERVATIONAL_UNIT)
    if graph.edges_from(f.id, EdgeKind.NESTED_IN):
        tags.add(ImplicitRole.NESTED_UNIT)
    return frozenset(tags)


def _has_cycle(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> list[int] | None:
    sorter = graphlib.TopologicalSorter({n: () for n in nodes})
    for source, target in edges:
        sorter.add(source, target)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        return list(exc.args[1])
    return None


def validate(design: Design) -> list[Violation]:
    """Check every structural rule of the graph form; violations are returned, not raised."""
    out: list[Violation] = []
    fg, lg = design.factor_graph, design.level_graph
    nodes = fg.nodes

    def name(fid: int) -> str:
        return nodes[fid].name if fid in nodes else f"#{fid}"

    seen: set[str] = set()
    for f in fg:
        if not f.name:
            out.append(Violation("name", f"#{f.id}", "factor name is empty"))
        if f.name in seen:
            out.append(Violation("name", f.name, "duplicate factor name"))
        seen.add(f.name)
        levels = lg.levels_of(f.id)
        if len(levels) != f.level_count:
            out.append(Violation("level-count", f.name,
                                 f"declares {f.level_count} levels but owns {len(levels)}"))
        if f.role is Role.RECORD and levels:
            out.append(Violation("level-count", f.name, "record factors own no levels"))
        if f.role is not Role.RECORD and not levels:
            out.append(Violation("level-count", f.name, "factor has no levels"))
        ordinals = [lv.ordinal for lv in levels]
        if ordinals != list(range(1, len(levels) + 1)):
            out.append(Violation("level-ordinal", f.name, "ordinals are not 1..n"))
        labels = [lv.label for lv in levels]
        if len(set(labels)) != len(labels):
            out.append(Violation("level-label", f.name, "duplicate level labels"))

    for e in fg.edges:
        subject = f"{name(e.source)} -> {name(e.target)}"
        if e.source not in nodes or e.target not in nodes:
            out.append(Violation("dangling-edge", subject, "edge endpoint is not a factor"))
            continue
        want = EDGE_ROLES[e.kind]
        got = (nodes[e.source].role, nodes[e.target].role)
        if got != want:
            out.append(Violation("role-pairing", subject,
                                 f"{e.kind.value} needs {want[0].value} -> {want[1].value}, "
                                 f"got {got[0].value} -> {got[1].value}"))

    cycle = _has_cycle(nodes, ((e.source, e.target) for e in fg.edges))
    if cycle:
        out.append(Violation("cycle", "factor graph",
                             "cycle through " + " -> ".join(name(i) for i in cycle)))

    for f in fg.with_role(Role.UNIT):
        parents = fg.edges_from(f.id, EdgeKind.NESTED_IN)
        if len(parents) > 1:
            out.append(Violation("forest", f.name, "unit has more than one nesting parent"))

    level_cycle = _has_cycle(lg.nodes, lg.edges)
    if level_cycle:
        out.append(Violation("cycle", "level graph",
                             "cycle through " + " -> ".join(lg.nodes[i].label for i in level_cycle
                                                            if i in lg.nodes)))

    factor_pairs = {(e.source, e.target) for e in fg.edges}
    for source, target in lg.edges:
        a, b = lg.nodes.get(source), lg.nodes.get(target)
        if a is None or b is None:
            out.append(Violation("dangling-edge", f"level {source} -> {target}",
                                 "edge endpoint is not a level"))
            continue
        if (a.factor, b.factor) not in factor_pairs:
            out.append(Violation("level-edge", f"{a.label} -> {b.label}",
                                 f"no factor edge {name(a.factor)} -> {name(b.factor)}"))
        elif (nodes[a.factor].role is Role.TREATMENT and design.assignment is None):
            out.append(Violation("premature-assignment", f"{a.label} -> {b.label}",
                                 "treatment level linked before assignment"))

    for e in fg.edges:
        if e.kind is not EdgeKind.NESTED_IN or e.source not in nodes or e.target not in nodes:
            continue
        parent_ids = {lv.id for lv in lg.levels_of(e.target)}
        for lv in lg.levels_of(e.source):
            hits = [t for t in lg.successors(lv.id) if t in parent_ids]
            if len(hits) != 1:
                out.append(Violation("nesting", lv.label,
                                     f"has {len(hits)} parent levels in {name(e.target)}, expected 1"))

    used: set[int] = set()
    for i, a in enumerate(design.allotments):
        subject = f"allotment {i + 1}"
        if not a.sources:
            out.append(Violation("allotment", subject, "no treatment sources"))
        for s in a.sources:
            if s not in nodes:
                out.append(Violation("allotment", subject, f"unknown factor #{s}"))
            elif nodes[s].role is not Role.TREATMENT:
                out.append(Violation("allotment", subject, f"{name(s)} is not a treatment"))
            if s in used:
                out.append(Violation("allotment", subject, f"{name(s)} is allotted twice"))
            used.add(s)
        if a.target not in nodes:
            out.append(Violation("allotment", subject, f"unknown factor #{a.target}"))
        elif nodes[a.target].role is not Role.UNIT:
            out.append(Violation("allotment", subject, f"{name(a.target)} is not a unit"))

    if design.assignment is not None:
        n = len(design.assignment.orders)
        if n != 1 and n != len(design.allotments):
            out.append(Violation("assignment", "orders",
                                 f"{n} orders given for {len(design.allotments)} allotments"))
    return out
