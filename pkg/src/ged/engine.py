"""The grammar verbs: declare factors, allot treatments, and assign levels.

Every verb checks all of its arguments before touching the design, so a
failed call leaves the design exactly as it was.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .dsl.ast import (
    AllotDecl,
    AssignDecl,
    Command,
    Count,
    DesignSpec,
    Labels,
    NestedIn,
    RcrdDecl,
    TrtDecl,
    UnitDecl,
)
from .model import (
    Allotment,
    AssignmentSpec,
    Design,
    DesignError,
    MAX_LEVELS,
    EdgeKind,
    Factor,
    Level,
    Order,
    Role,
    new_design,
)
from .rng import MASK64, Rng

ROOT = None

Combo = tuple[Level, ...]


@dataclass(frozen=True)
class ConstraintGroup:
    """Target-unit levels sharing one nesting-parent level (key is ROOT when unnested)."""

    key: int | None
    members: tuple[int, ...]


def _check_name(design: Design, name: str, taken: set[str]) -> None:
    if not isinstance(name, str) or not name:
        raise DesignError(f"factor name must be a nonempty string, got {name!r}")
    if design.factor_graph.get(name) is not None or name in taken:
        raise DesignError(f"factor {name!r} is already declared")


def _check_total(design: Design, extra: int) -> None:
    if len(design.level_graph) + extra > MAX_LEVELS:
        raise DesignError(f"design would exceed {MAX_LEVELS} levels")


def _check_labels(name: str, labels: Sequence[str]) -> None:
    if not labels:
        raise DesignError(f"{name!r}: label list is empty")
    if len(set(labels)) != len(labels):
        dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
        raise DesignError(f"{name!r}: duplicate labels {dupes}")


def _check_count(name: str, n) -> None:
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise DesignError(f"{name!r}: count must be a positive integer, got {n!r}")


def _as_spec(name: str, value):
    if isinstance(value, (Count, Labels, NestedIn)):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return Count(value)
    if isinstance(value, (list, tuple)):
        return Labels(tuple(str(v) for v in value))
    raise DesignError(f"{name!r}: cannot interpret {value!r} as a factor structure")


def _gather(decl_type, decls: Iterable, named: dict, make) -> list:
    out = []
    for d in decls:
        if not isinstance(d, decl_type):
            raise DesignError(f"expected {decl_type.__name__}, got {d!r}")
        out.append(d)
    out.extend(make(k, v) for k, v in named.items())
    return out


def _add_factor(design: Design, name: str, role: Role, labels: Sequence[str]) -> tuple[Factor, list[Level]]:
    factor = design.factor_graph.add(Factor(design.new_id(), name, role, len(labels)))
    levels = [design.level_graph.add(Level(design.new_id(), factor.id, lab, k))
              for k, lab in enumerate(labels, start=1)]
    return factor, levels


def _nested_plan(name: str, spec: NestedIn, parent_labels: list[str]) -> list[int]:
    """Per-parent child counts, indexed like `parent_labels`."""
    if isinstance(spec.counts, int):
        _check_count(name, spec.counts)
        return [spec.counts] * len(parent_labels)
    pairs = list(spec.counts)
    if not pairs:
        raise DesignError(f"{name!r}: per-parent counts are empty")
    key_types = {type(k) for k, _ in pairs}
    if not (key_types <= {int} or key_types <= {str}):
        raise DesignError(f"{name!r}: per-parent keys must be all ordinals or all labels")
    counts: list[int | None] = [None] * len(parent_labels)
    for key, n in pairs:
        _check_count(name, n)
        if isinstance(key, str):
            if key not in parent_labels:
                raise DesignError(f"{name!r}: {spec.parent!r} has no level labelled {key!r}")
            idx = parent_labels.index(key)
        elif isinstance(key, int) and not isinstance(key, bool):
            if not 1 <= key <= len(parent_labels):
                raise DesignError(f"{name!r}: {spec.parent!r} has no level {key}")
            idx = key - 1
        else:
            raise DesignError(f"{name!r}: bad parent key {key!r}")
        if counts[idx] is not None:
            raise DesignError(f"{name!r}: parent level {key!r} given more than once")
        counts[idx] = n
    missing = [parent_labels[i] for i, c in enumerate(counts) if c is None]
    if missing:
        raise DesignError(f"{name!r}: no count for parent levels {missing}")
    return counts


def set_units(design: Design, decls: Sequence[UnitDecl] = (), **named) -> Design:
    decls = _gather(UnitDecl, decls, named, lambda k, v: UnitDecl(k, _as_spec(k, v)))
    taken: set[str] = set()
    planned: dict[str, list[str]] = {}
    plans = []
    total = 0
    for d in decls:
        _check_name(design, d.name, taken)
        spec = d.spec
        parent_counts = None
        if isinstance(spec, Count):
            _check_count(d.name, spec.n)
            labels = [f"{d.name}{k}" for k in range(1, spec.n + 1)]
        elif isinstance(spec, Labels):
            labels = list(spec.labels)
            _check_labels(d.name, labels)
        elif isinstance(spec, NestedIn):
            if spec.parent in planned:
                parent_labels = planned[spec.parent]
            else:
                parent = design.factor_graph.get(spec.parent)
                if parent is None or parent.role is not Role.UNIT:
                    raise DesignError(f"{d.name!r}: unknown parent unit {spec.parent!r}")
                parent_labels = [lv.label for lv in design.levels(parent)]
            parent_counts = _nested_plan(d.name, spec, parent_labels)
            labels = [f"{d.name}{k}" for k in range(1, sum(parent_counts) + 1)]
        else:
            raise DesignError(f"{d.name!r}: a unit cannot be declared as {spec!r}")
        total += len(labels)
        _check_total(design, total)
        taken.add(d.name)
        planned[d.name] = labels
        plans.append((d, labels, parent_counts))

    for d, labels, parent_counts in plans:
        factor, levels = _add_factor(design, d.name, Role.UNIT, labels)
        if parent_counts is None:
            continue
        parent = design.factor_graph.get(d.spec.parent)
        design.factor_graph.add_edge(factor.id, parent.id, EdgeKind.NESTED_IN)
        children = iter(levels)
        for parent_level, n in zip(design.levels(parent), parent_counts):
            for child in itertools.islice(children, n):
                design.level_graph.add_edge(child.id, parent_level.id)
    return design


def set_trts(design: Design, decls: Sequence[TrtDecl] = (), **named) -> Design:
    decls = _gather(TrtDecl, decls, named, lambda k, v: TrtDecl(k, _as_spec(k, v)))
    taken: set[str] = set()
    plans = []
    total = 0
    for d in decls:
        _check_name(design, d.name, taken)
        if isinstance(d.spec, Count):
            _check_count(d.name, d.spec.n)
            labels = [f"{d.name}{k}" for k in range(1, d.spec.n + 1)]
        elif isinstance(d.spec, Labels):
            labels = list(d.spec.labels)
            _check_labels(d.name, labels)
        else:
            raise DesignError(f"{d.name!r}: a treatment cannot be declared as {d.spec!r}")
        total += len(labels)
        _check_total(design, total)
        taken.add(d.name)
        plans.append((d.name, labels))
    for name, labels in plans:
        _add_factor(design, name, Role.TREATMENT, labels)
    return design


def set_rcrds(design: Design, decls: Sequence[RcrdDecl] = (), **named) -> Design:
    decls = _gather(RcrdDecl, decls, named, lambda k, v: RcrdDecl(k, v))
    taken: set[str] = set()
    for d in decls:
        _check_name(design, d.name, taken)
        unit = design.factor_graph.get(d.unit) if isinstance(d.unit, str) else None
        if unit is None or unit.role is not Role.UNIT:
            raise DesignError(f"record {d.name!r}: unknown unit {d.unit!r}")
        taken.add(d.name)
    for d in decls:
        factor, _ = _add_factor(design, d.name, Role.RECORD, [])
        design.factor_graph.add_edge(factor.id, design.factor_graph.get(d.unit).id, EdgeKind.MEASURED_ON)
    return design


_FORMULA = re.compile(r"^\s*(\w+(?:\s*:\s*\w+)*)\s*~\s*(\w+)\s*$")


def _as_allot(item) -> AllotDecl:
    if isinstance(item, AllotDecl):
        return item
    if isinstance(item, str):
        m = _FORMULA.match(item)
        if not m:
            raise DesignError(f"cannot read allotment {item!r}; expected 'trt ~ unit' or 'a:b ~ unit'")
        return AllotDecl(tuple(s.strip() for s in m.group(1).split(":")), m.group(2))
    if isinstance(item, tuple) and len(item) == 2:
        sources, target = item
        if isinstance(sources, str):
            sources = (sources,)
        return AllotDecl(tuple(sources), target)
    raise DesignError(f"cannot read allotment {item!r}")


def allot_trts(design: Design, *allotments) -> Design:
    """Record which treatment (or crossed treatments) is applied to which unit.

    Items may be `AllotDecl`s, formula strings such as ``"frequency:acceleration ~ experiment"``,
    or ``(sources, target)`` pairs. A sequence of such items is also accepted.
    """
    if len(allotments) == 1 and isinstance(allotments[0], list):
        allotments = tuple(allotments[0])
    if design.assignment is not None:
        raise DesignError("treatments are already assigned; allot before assign_trts")
    fg = design.factor_graph
    used = {s for a in design.allotments for s in a.sources}
    pending = []
    for item in allotments:
        decl = _as_allot(item)
        if not decl.sources:
            raise DesignError("allotment has no treatment")
        source_ids = []
        for s in decl.sources:
            f = fg.get(s) if isinstance(s, str) else None
            if f is None:
                raise DesignError(f"unknown treatment {s!r}")
            if f.role is not Role.TREATMENT:
                raise DesignError(f"{s!r} is a {f.role.value}, not a treatment")
            if f.id in used:
                raise DesignError(f"treatment {s!r} is already allotted")
            used.add(f.id)
            source_ids.append(f.id)
        target = fg.get(decl.target) if isinstance(decl.target, str) else None
        if target is None:
            raise DesignError(f"unknown unit {decl.target!r}")
        if target.role is not Role.UNIT:
            raise DesignError(f"{decl.target!r} is a {target.role.value}, not a unit")
        pending.append(Allotment(tuple(source_ids), target.id))
    for a in pending:
        design.allotments.append(a)
        for s in a.sources:
            fg.add_edge(s, a.target, EdgeKind.ALLOTTED_TO)
    return design


def cross_levels(design: Design, sources: Sequence) -> list[Combo]:
    """Cartesian product of the sources' levels, first factor varying slowest."""
    if not sources:
        raise DesignError("crossing needs at least one treatment")
    return list(itertools.product(*(design.levels(s) for s in sources)))


def constraint_groups(design: Design, target) -> list[ConstraintGroup]:
    unit = design.factor(target)
    if unit.role is not Role.UNIT:
        raise DesignError(f"{unit.name!r} is not a unit")
    levels = design.levels(unit)
    parent = design.factor_graph.parent(unit.id)
    if parent is None:
        return [ConstraintGroup(ROOT, tuple(lv.id for lv in levels))]
    parent_levels = design.levels(parent)
    parent_ids = {lv.id for lv in parent_levels}
    members: dict[int, list[int]] = {lv.id: [] for lv in parent_levels}
    for lv in levels:
        for p in design.level_graph.successors(lv.id):
            if p in parent_ids:
                members[p].append(lv.id)
                break
    return [ConstraintGroup(p.id, tuple(members[p.id])) for p in parent_levels]


def assign_random(group: ConstraintGroup, combos: Sequence, rng: Rng) -> dict:
    """Replicate combos as evenly as possible over the group, then shuffle.

    Each combo gets n // t copies; the n % t leftover copies go to distinct
    combos drawn without replacement. Draw order: the leftover draw first,
    then a Fisher-Yates shuffle of the pooled copies (kept in combo order
    beforehand), then members are paired with the pool in ordinal order.
    """
    n, t = len(group.members), len(combos)
    if n == 0 or t == 0:
        raise DesignError("random assignment needs a nonempty group and at least one combination")
    base, extra = divmod(n, t)
    bonus = set(rng.sample_indices(t, extra)) if extra else set()
    pool = []
    for i, combo in enumerate(combos):
        pool.extend([combo] * (base + (i in bonus)))
    rng.shuffle(pool)
    return dict(zip(group.members, pool))


def assign_systematic(groups: Sequence[ConstraintGroup], combos: Sequence) -> dict:
    members = [m for g in groups for m in g.members]
    return {m: combos[i % len(combos)] for i, m in enumerate(members)}


def _orders(order) -> tuple[Order, ...]:
    if isinstance(order, (str, Order)):
        order = [order]
    try:
        return tuple(Order(o) for o in order)
    except (ValueError, TypeError) as exc:
        raise DesignError(f"unknown assignment order in {order!r}") from exc


def assign_trts(design: Design, order="random", seed: int = 0) -> Design:
    """Assign treatment levels to unit levels for every allotment.

    `order` is one order for all allotments or one per allotment. One Rng,
    seeded once, serves all random allotments in declaration order. Running
    again replaces the previous assignment.
    """
    if isinstance(order, AssignmentSpec):
        spec = order
    else:
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MASK64:
            raise DesignError(f"seed must be an integer in [0, 2**64), got {seed!r}")
        spec = AssignmentSpec(_orders(order), seed)
    if not design.allotments:
        raise DesignError("nothing to assign: no allotments")
    if len(spec.orders) not in (1, len(design.allotments)):
        raise DesignError(f"{len(spec.orders)} orders given for {len(design.allotments)} allotments")

    lg = design.level_graph
    treatments = {f.id for f in design.factor_graph.with_role(Role.TREATMENT)}
    stale = [(s, t) for s, t in lg.edges if lg.nodes[s].factor in treatments]
    lg.remove_edges(stale)

    rng = Rng(spec.seed)
    for i, allotment in enumerate(design.allotments):
        combos = cross_levels(design, allotment.sources)
        groups = constraint_groups(design, allotment.target)
        if spec.order_for(i) is Order.SYSTEMATIC:
            mapping = assign_systematic(groups, combos)
        else:
            mapping = {}
            for g in groups:
                mapping.update(assign_random(g, combos, rng))
        for unit_level, combo in mapping.items():
            for trt_level in combo:
                lg.add_edge(trt_level.id, unit_level)
    design.assignment = spec
    design.seed = spec.seed
    return design


def replay(commands: Iterable[Command], design: Design, seed: int | None = None) -> Design:
    """Apply lowered commands in order; `seed` (if given) overrides any assign seed."""
    for cmd in commands:
        if cmd.verb == "set_units":
            set_units(design, cmd.args[0])
        elif cmd.verb == "set_trts":
            set_trts(design, cmd.args[0])
        elif cmd.verb == "set_rcrds":
            set_rcrds(design, cmd.args[0])
        elif cmd.verb == "allot_trts":
            allot_trts(design, *cmd.args[0])
        elif cmd.verb == "assign_trts":
            decl: AssignDecl = cmd.args[0]
            chosen = seed if seed is not None else (decl.seed if decl.seed is not None else 0)
            assign_trts(design, decl.orders, chosen)
        else:
            raise DesignError(f"unknown verb {cmd.verb!r}")
    return design


def build(spec: DesignSpec, seed: int | None = None) -> Design:
    """Construct (and assign, if the program asks) the design a program describes."""
    from .dsl.lower import lower
    return replay(lower(spec), new_design(spec.title), seed=seed)
