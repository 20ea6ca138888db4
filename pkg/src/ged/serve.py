"""Serving: graph form to design table, plus CSV and Graphviz DOT export."""

from __future__ import annotations

from dataclasses import dataclass

from .model import Design, DesignError, Factor, ImplicitRole, Level, Role, implicit_role, validate


class UnservableError(DesignError):
    """Some levels of the level graph cannot be linked to a row of the table."""

    def __init__(self, levels: list[Level], names: dict[int, str], reason: str):
        self.levels = levels
        self.reason = reason
        shown = ", ".join(f"{names[lv.factor]}:{lv.label}" for lv in levels)
        message = reason if not levels else f"{reason}; unlinked levels: {shown}"
        super().__init__(message)


@dataclass(frozen=True)
class Column:
    name: str
    role: Role
    implicit: frozenset[ImplicitRole] = frozenset()


@dataclass
class DesignTable:
    title: str | None
    columns: list[Column]
    rows: list[tuple[str, ...]]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> list[str]:
        i = self.names.index(name)
        return [row[i] for row in self.rows]

    def records(self) -> list[dict[str, str]]:
        names = self.names
        return [dict(zip(names, row)) for row in self.rows]

    def to_csv(self) -> bytes:
        return to_csv(self)


def _serving_chain(design: Design) -> tuple[list[Factor], str | None]:
    """Units from root to the serving leaf, and why serving is impossible (if it is)."""
    fg = design.factor_graph
    units = fg.with_role(Role.UNIT)
    if not units:
        return [], "design has no units"
    leaves = [u for u in units if not fg.children(u.id)]
    # with several leaves, the one with most levels is the candidate row unit
    leaf = max(leaves, key=lambda u: u.level_count)
    chain = [leaf]
    while (parent := fg.parent(chain[-1].id)) is not None:
        chain.append(parent)
    chain.reverse()
    reason = None
    if len(leaves) > 1:
        others = ", ".join(u.name for u in leaves if u is not leaf)
        reason = f"units do not form a single nesting chain ending at '{leaf.name}' (also ends at: {others})"
    return chain, reason


def serve_table(design: Design) -> DesignTable:
    """One row per level of the innermost unit; columns are units, treatments, records."""
    problems = validate(design)
    if problems:
        raise DesignError("design is invalid: " + "; ".join(map(str, problems)))
    fg, lg = design.factor_graph, design.level_graph
    names = {f.id: f.name for f in fg}
    chain, reason = _serving_chain(design)
    if not chain:
        raise UnservableError([], names, reason)

    parent_of: dict[int, int] = {}
    for child, parent in zip(chain[1:], chain[:-1]):
        parent_ids = {lv.id for lv in lg.levels_of(parent.id)}
        for lv in lg.levels_of(child.id):
            parent_of[lv.id] = next(p for p in lg.successors(lv.id) if p in parent_ids)

    treatments = fg.with_role(Role.TREATMENT)
    records = fg.with_role(Role.RECORD)
    trt_ids = {f.id for f in treatments}
    linked: set[int] = set()
    rows = []
    for leaf_level in lg.levels_of(chain[-1].id):
        path = [leaf_level.id]
        while path[-1] in parent_of:
            path.append(parent_of[path[-1]])
        path.reverse()
        trt_cells: dict[int, str] = {}
        for unit_level in path:
            for src in lg.predecessors(unit_level):
                lv = lg.nodes[src]
                if lv.factor in trt_ids:
                    trt_cells[lv.factor] = lv.label
                    linked.add(src)
        linked.update(path)
        rows.append(tuple(lg.nodes[i].label for i in path)
                    + tuple(trt_cells.get(f.id, "") for f in treatments)
                    + ("",) * len(records))

    unlinked = [lv for f in fg for lv in lg.levels_of(f.id) if lv.id not in linked]
    if unlinked or reason:
        if reason is None:
            unassigned = [a for a in design.allotments if design.assignment is None]
            reason = "treatments are allotted but not assigned" if unassigned else "levels cannot be linked to a row"
        raise UnservableError(unlinked, names, reason)

    columns = ([Column(u.name, Role.UNIT, implicit_role(design, u)) for u in chain]
               + [Column(f.name, f.role) for f in treatments + records])
    return DesignTable(design.title, columns, rows)


def _csv_field(text: str) -> str:
    if any(c in text for c in ',"\r\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def to_csv(table: DesignTable) -> bytes:
    """RFC 4180 CSV with `\\n` line endings, UTF-8 without BOM."""
    lines = [",".join(_csv_field(n) for n in table.names)]
    for row in table.rows:
        # a lone empty field is quoted so the line is not mistaken for a blank one
        lines.append(",".join(_csv_field(v) for v in row) if row != ("",) else '""')
    return ("\n".join(lines) + "\n").encode("utf-8")


ROLE_STYLE = {
    Role.UNIT: ("ellipse", "#b2df8a"),
    Role.TREATMENT: ("box", "#a6cee3"),
    Role.RECORD: ("note", "#fdbf6f"),
}

_LEGEND = "// legend: " + ", ".join(
    f"{role.value} = {shape} {color}" for role, (shape, color) in ROLE_STYLE.items())


def _dot_string(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _header(design: Design, kind: str) -> list[str]:
    title = (design.title or "untitled").replace("\r", " ").replace("\n", " ")
    return [f"// {kind} graph: {title}", _LEGEND]


def _wrap(lines: list[str], body: list[str]) -> str:
    if not body:
        return "\n".join(lines + ["digraph { }"]) + "\n"
    return "\n".join(lines + ["digraph {"] + body + ["}"]) + "\n"


def _node(node_id: str, label: str, role: Role) -> str:
    shape, color = ROLE_STYLE[role]
    return f'{node_id} [label={_dot_string(label)}, shape={shape}, style=filled, fillcolor="{color}"];'


def factor_graph_dot(design: Design) -> str:
    fg = design.factor_graph
    order = {fid: i for i, fid in enumerate(fg.nodes)}
    body = [f"  {_node(f'F{f.id}', f.name, f.role)}" for f in fg]
    for e in sorted(fg.edges, key=lambda e: (order.get(e.source, -1), order.get(e.target, -1))):
        body.append(f'  F{e.source} -> F{e.target} [label="{e.kind.value}"];')
    return _wrap(_header(design, "factor"), body)


def level_graph_dot(design: Design) -> str:
    fg, lg = design.factor_graph, design.level_graph
    body = []
    rank: dict[int, int] = {}
    for f in fg:
        levels = lg.levels_of(f.id)
        if not levels:
            continue
        body.append(f"  subgraph cluster_F{f.id} {{")
        body.append(f"    label={_dot_string(f.name)};")
        for lv in levels:
            rank[lv.id] = len(rank)
            body.append(f"    {_node(f'L{lv.id}', lv.label, f.role)}")
        body.append("  }")
    for s, t in sorted(lg.edges, key=lambda e: (rank.get(e[0], -1), rank.get(e[1], -1))):
        body.append(f"  L{s} -> L{t};")
    return _wrap(_header(design, "level"), body)
