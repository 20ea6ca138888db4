import collections
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from randomgen import Xoshiro256

from ged import (
    DesignError,
    ImplicitRole,
    Rng,
    allot_trts,
    assign_random,
    assign_systematic,
    assign_trts,
    constraint_groups,
    cross_levels,
    implicit_role,
    nested_in,
    new_design,
    set_rcrds,
    set_trts,
    set_units,
    validate,
)
from ged.dsl import Labels, NestedIn, RcrdDecl, TrtDecl, UnitDecl
from ged.engine import ROOT, ConstraintGroup
from ged.model import EdgeKind, Role
from ged.rng import splitmix64


def labels(design, factor):
    return [lv.label for lv in design.levels(factor)]


def parent_label(design, level, parent):
    parent_ids = {lv.id: lv.label for lv in design.levels(parent)}
    (hit,) = [parent_ids[t] for t in design.level_graph.successors(level.id) if t in parent_ids]
    return hit


def assigned(design, unit, trt):
    """unit label -> treatment label, read off the level graph."""
    trt_ids = {lv.id: lv.label for lv in design.levels(trt)}
    out = {}
    for lv in design.levels(unit):
        hits = [trt_ids[s] for s in design.level_graph.predecessors(lv.id) if s in trt_ids]
        assert len(hits) == 1
        out[lv.label] = hits[0]
    return out


# --- set_units / set_trts / set_rcrds -------------------------------------------------

def test_split_plot_units():
    d = set_units(new_design(), patch=36, plot=nested_in("patch", 3))
    plots = d.levels("plot")
    assert len(plots) == 108
    per_patch = collections.Counter(parent_label(d, lv, "patch") for lv in plots)
    assert len(per_patch) == 36 and set(per_patch.values()) == {3}
    assert labels(d, "plot")[:4] == ["plot1", "plot2", "plot3", "plot4"]
    assert labels(d, "plot")[-1] == "plot108"


def test_per_parent_counts():
    d = set_units(new_design(), experiment=4,
                  subject=nested_in("experiment", {1: 21, 2: 20, 3: 29, 4: 59}))
    subjects = d.levels("subject")
    assert len(subjects) == 129
    per = collections.Counter(parent_label(d, lv, "experiment") for lv in subjects)
    assert [per[f"experiment{k}"] for k in range(1, 5)] == [21, 20, 29, 59]


def test_per_parent_counts_follow_parent_order_not_key_order():
    d = set_units(new_design(), e=2, s=nested_in("e", (2, 1), (1, 3)))
    assert [parent_label(d, lv, "e") for lv in d.levels("s")] == ["e1", "e1", "e1", "e2"]


def test_per_parent_counts_by_label():
    d = set_units(new_design(), site=["north", "south"], tree=nested_in("site", {"south": 1, "north": 2}))
    assert [parent_label(d, lv, "site") for lv in d.levels("tree")] == ["north", "north", "south"]


def test_minimal_nesting():
    d = set_units(new_design(), parent=1, unit=nested_in("parent", 1))
    assert len(d.levels("unit")) == 1
    assert len(d.level_graph.edges) == 1


def test_units_from_decls_nesting_within_one_call():
    d = set_units(new_design(), [UnitDecl("a", Labels(("x", "y"))), UnitDecl("b", NestedIn("a", 2))])
    assert labels(d, "a") == ["x", "y"]
    assert len(d.levels("b")) == 4


@pytest.mark.parametrize("kwargs, message", [
    ({"a": 0}, "positive"),
    ({"a": -1}, "positive"),
    ({"b": nested_in("zz", 2)}, "unknown parent"),
    ({"a": 2, "b": nested_in("a", {1: 2})}, "no count"),
    ({"a": 2, "b": nested_in("a", {1: 2, 2: 0})}, "positive"),
    ({"a": 2, "b": nested_in("a", {1: 2, 3: 1})}, "no level 3"),
    ({"a": 2, "b": nested_in("a", {1: 2, "a2": 1})}, "all ordinals"),
    ({"a": ["x", "x"]}, "duplicate"),
    ({"a": []}, "empty"),
])
def test_set_units_errors(kwargs, message):
    d = new_design()
    with pytest.raises(DesignError, match=message):
        set_units(d, **kwargs)
    assert d.factors == []


def test_set_units_duplicate_name():
    d = set_units(new_design(), a=2)
    with pytest.raises(DesignError, match="already declared"):
        set_units(d, a=3)


def test_failed_call_leaves_design_untouched():
    d = set_units(new_design(), a=2)
    with pytest.raises(DesignError):
        set_units(d, b=3, c=nested_in("zz", 1))
    assert [f.name for f in d.factors] == ["a"]
    assert len(d.level_graph) == 2


def test_level_limit():
    with pytest.raises(DesignError, match="exceed"):
        set_units(new_design(), a=10**6, b=nested_in("a", 11))


def test_treatment_counts_and_labels():
    d = set_trts(new_design(), variety=12, fertilizer=["basal", "sulphate", "chloride"])
    assert labels(d, "variety") == [f"variety{k}" for k in range(1, 13)]
    assert labels(d, "fertilizer") == ["basal", "sulphate", "chloride"]


def test_single_level_treatment_is_a_valid_design():
    d = new_design().set_units(u=3).set_trts(t=1).allot_trts("t ~ u").assign_trts()
    assert validate(d) == []
    assert set(assigned(d, "u", "t").values()) == {"t1"}


@pytest.mark.parametrize("decls, message", [
    ([TrtDecl("t", Labels(("a", "a")))], "duplicate"),
    ([TrtDecl("t", Labels(()))], "empty"),
    ([TrtDecl("t", NestedIn("u", 2))], "cannot be declared"),
])
def test_set_trts_errors(decls, message):
    with pytest.raises(DesignError, match=message):
        set_trts(new_design(), decls)


def test_records_add_measured_on_edges():
    d = new_design().set_units(patch=36, plot=nested_in("patch", 3))
    set_rcrds(d, [RcrdDecl("yield", "plot"), RcrdDecl("biomass", "patch")])
    fg = d.factor_graph
    assert [(fg.nodes[e.source].name, fg.nodes[e.target].name, e.kind) for e in fg.edges
            if e.kind is EdgeKind.MEASURED_ON] == [("yield", "plot", EdgeKind.MEASURED_ON),
                                                   ("biomass", "patch", EdgeKind.MEASURED_ON)]
    assert ImplicitRole.OBSERVATIONAL_UNIT in implicit_role(d, "plot")
    assert d.levels("yield") == []
    assert d.factor("yield").role is Role.RECORD


def test_record_on_undeclared_unit():
    with pytest.raises(DesignError, match="unknown unit"):
        set_rcrds(new_design(), y="plot")


def test_record_on_treatment_rejected():
    d = new_design().set_trts(t=2)
    with pytest.raises(DesignError, match="unknown unit"):
        set_rcrds(d, y="t")


# --- allot_trts ------------------------------------------------------------------------

def test_allot_split_plot(fisher):
    assert len(fisher.allotments) == 2
    assert ImplicitRole.EXPERIMENTAL_UNIT in implicit_role(fisher, "patch")
    assert ImplicitRole.EXPERIMENTAL_UNIT in implicit_role(fisher, "plot")


def test_allot_crossed():
    d = new_design().set_units(experiment=4).set_trts(frequency=["0.167", "0.250"],
                                                      acceleration=["0.111", "0.222"])
    allot_trts(d, "frequency:acceleration ~ experiment")
    (a,) = d.allotments
    assert [d.factor(s).name for s in a.sources] == ["frequency", "acceleration"]
    assert len(d.factor_graph.edges_to(d.factor("experiment").id, EdgeKind.ALLOTTED_TO)) == 2


def test_allot_adds_no_level_edges():
    d = new_design().set_units(u=4).set_trts(t=2)
    before = len(d.level_graph.edges)
    allot_trts(d, "t ~ u")
    assert len(d.level_graph.edges) == before


@pytest.mark.parametrize("items, message", [
    (["variety ~ patch", "variety ~ patch"], "already allotted"),
    (["patch ~ plot"], "not a treatment"),
    (["variety ~ fertilizer"], "not a unit"),
    (["ghost ~ plot"], "unknown treatment"),
    (["variety ~ ghost"], "unknown unit"),
    (["variety"], "cannot read"),
])
def test_allot_errors(items, message):
    d = (new_design().set_units(patch=4, plot=nested_in("patch", 3))
         .set_trts(variety=2, fertilizer=3))
    with pytest.raises(DesignError, match=message):
        allot_trts(d, *items)
    assert d.allotments == []


def test_allot_after_assign_rejected(fisher):
    fisher.set_trts(extra=2)
    with pytest.raises(DesignError, match="already assigned"):
        fisher.allot_trts("extra ~ plot")


# --- cross_levels ----------------------------------------------------------------------

def test_cross_first_factor_slowest(motion):
    combos = cross_levels(motion, ["frequency", "acceleration"])
    assert [tuple(lv.label for lv in c) for c in combos] == [
        ("0.167", "0.111"), ("0.167", "0.222"), ("0.250", "0.111"), ("0.250", "0.222")]


def test_cross_single_factor_is_identity(fisher):
    assert [c[0].label for c in cross_levels(fisher, ["fertilizer"])] == ["basal", "sulphate", "chloride"]


def test_cross_two_by_three_run_lengths():
    d = new_design().set_trts(a=2, b=3)
    combos = cross_levels(d, ["a", "b"])
    assert len(combos) == 6
    runs = [(k, len(list(g))) for k, g in itertools.groupby(c[0].label for c in combos)]
    assert runs == [("a1", 3), ("a2", 3)]
    assert [c[1].label for c in combos] == ["b1", "b2", "b3"] * 2


def test_cross_needs_sources():
    with pytest.raises(DesignError):
        cross_levels(new_design(), [])


# --- constraint_groups -----------------------------------------------------------------

def test_groups_nested_plot(fisher):
    groups = constraint_groups(fisher, "plot")
    assert len(groups) == 36
    assert all(len(g.members) == 3 for g in groups)
    assert [g.key for g in groups] == [lv.id for lv in fisher.levels("patch")]


def test_groups_unnested_patch(fisher):
    (group,) = constraint_groups(fisher, "patch")
    assert group.key is ROOT
    assert group.members == tuple(lv.id for lv in fisher.levels("patch"))


def test_groups_pen_by_enumeration(pheasant):
    # oracle: enumerate (week, strip, swath) triples and the pens beneath each
    swaths = list(itertools.product(range(3), range(3), range(2)))
    pens_per_swath = collections.Counter((w, s, sw) for w, s, sw, _ in itertools.product(range(3), range(3), range(2), range(2)))
    groups = constraint_groups(pheasant, "pen")
    assert len(groups) == len(swaths)
    assert sorted(len(g.members) for g in groups) == sorted(pens_per_swath.values())


def test_groups_members_ascend():
    d = new_design().set_units(e=3, s=nested_in("e", {1: 2, 2: 1, 3: 3}))
    groups = constraint_groups(d, "s")
    ordinals = {lv.id: lv.ordinal for lv in d.levels("s")}
    for g in groups:
        assert [ordinals[m] for m in g.members] == sorted(ordinals[m] for m in g.members)
    assert sorted(m for g in groups for m in g.members) == sorted(ordinals)


def test_groups_unknown_factor(fisher):
    with pytest.raises(DesignError):
        constraint_groups(fisher, "nope")
    with pytest.raises(DesignError, match="not a unit"):
        constraint_groups(fisher, "variety")


# --- assign_random ---------------------------------------------------------------------

def reference_random_assignment(n, t, seed):
    """Independent route: randomgen's xoshiro256** stream plus the draw order written out longhand."""
    sm = splitmix64(seed)
    g = Xoshiro256(0)
    st_ = g.state
    st_["s"] = np.array([next(sm) for _ in range(4)], dtype=np.uint64)
    g.state = st_

    def bounded(bound):
        while True:
            x = int(g.random_raw())
            if x >= (2**64 - bound) % bound:
                return x % bound

    base, r = n // t, n % t
    idx = list(range(t))
    for i in range(r):
        j = i + bounded(t - i)
        idx[i], idx[j] = idx[j], idx[i]
    extra = set(idx[:r])
    pool = [c for c in range(t) for _ in range(base + (c in extra))]
    for i in range(len(pool) - 1, 0, -1):
        j = bounded(i + 1)
        pool[i], pool[j] = pool[j], pool[i]
    return pool


@pytest.mark.parametrize("n, t, seed", [(36, 12, 1), (3, 3, 0), (5, 3, 9), (7, 2, 123), (2, 5, 77), (1, 1, 0)])
def test_random_assignment_matches_reference_draw_order(n, t, seed):
    group = ConstraintGroup(ROOT, tuple(range(100, 100 + n)))
    mapping = assign_random(group, list(range(t)), Rng(seed))
    assert [mapping[m] for m in group.members] == reference_random_assignment(n, t, seed)


def test_random_36_patches_12_varieties():
    group = ConstraintGroup(ROOT, tuple(range(36)))
    counts = collections.Counter(assign_random(group, [f"v{k}" for k in range(12)], Rng(1)).values())
    assert set(counts.values()) == {3} and len(counts) == 12


def test_random_3_plots_3_fertilizers():
    group = ConstraintGroup(7, (1, 2, 3))
    got = assign_random(group, ["basal", "sulphate", "chloride"], Rng(4))
    assert sorted(got.values()) == ["basal", "chloride", "sulphate"]


def test_random_5_over_3_brute_force():
    group = ConstraintGroup(ROOT, tuple(range(5)))
    which_single = collections.Counter()
    for seed in range(10_000):
        counts = collections.Counter(assign_random(group, "ABC", Rng(seed)).values())
        assert sorted(counts.values()) == [1, 2, 2]
        which_single[min(counts, key=counts.get)] += 1
    # the leftover copies land on each combo about equally often
    assert all(abs(c - 10_000 / 3) < 300 for c in which_single.values())


def test_random_needs_members_and_combos():
    with pytest.raises(DesignError):
        assign_random(ConstraintGroup(ROOT, ()), ["a"], Rng(0))
    with pytest.raises(DesignError):
        assign_random(ConstraintGroup(ROOT, (1,)), [], Rng(0))


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 60), st.integers(1, 12), st.integers(0, 2**64 - 1))
def test_balance_and_near_balance(n, t, seed):
    group = ConstraintGroup(ROOT, tuple(range(n)))
    mapping = assign_random(group, list(range(t)), Rng(seed))
    assert sorted(mapping) == list(range(n))
    counts = [list(mapping.values()).count(c) for c in range(t)]
    if n % t == 0:
        assert set(counts) == {n // t}
    assert max(counts) - min(counts) <= 1
    assert sum(counts) == n


# --- assign_systematic -----------------------------------------------------------------

def test_systematic_identity():
    assert assign_systematic([ConstraintGroup(ROOT, (5,))], ["only"]) == {5: "only"}


def test_systematic_cycles():
    groups = [ConstraintGroup(1, (10, 11, 12)), ConstraintGroup(2, (13, 14, 15))]
    got = assign_systematic(groups, ["A", "B"])
    assert "".join(got[m] for m in range(10, 16)) == "".join("AB"[i % 2] for i in range(6))


def test_systematic_motion(motion):
    got = assigned(motion, "experiment", "frequency"), assigned(motion, "experiment", "acceleration")
    assert [(got[0][f"experiment{k}"], got[1][f"experiment{k}"]) for k in range(1, 5)] == [
        ("0.167", "0.111"), ("0.167", "0.222"), ("0.250", "0.111"), ("0.250", "0.222")]


def test_systematic_consumes_no_draws(monkeypatch):
    d = new_design().set_units(u=6).set_trts(t=2).allot_trts("t ~ u")
    seen = []
    original = Rng.next_u64
    monkeypatch.setattr(Rng, "next_u64", lambda self: seen.append(1) or original(self))
    assign_trts(d, "systematic", seed=3)
    assert seen == []
    rng = Rng(3)
    before = rng.state
    assign_systematic(constraint_groups(d, "u"), cross_levels(d, ["t"]))
    assert rng.state == before


# --- assign_trts -----------------------------------------------------------------------

def split_plot(seed=1):
    return (new_design("Fisher").set_units(patch=36, plot=nested_in("patch", 3))
            .set_trts(variety=12, fertilizer=["basal", "sulphate", "chloride"])
            .allot_trts("variety ~ patch", "fertilizer ~ plot")
            .assign_trts(["random", "random"], seed=seed))


def test_assign_deterministic():
    assert split_plot(1).level_graph.edges == split_plot(1).level_graph.edges


def test_assign_rerun_replaces_edges():
    d = split_plot(1)
    first = sorted(d.level_graph.edges)
    d.assign_trts(["random", "random"], seed=2)
    d.assign_trts(["random", "random"], seed=1)
    assert sorted(d.level_graph.edges) == first
    assert validate(d) == []


def test_seed_changes_assignment():
    differing = 0
    for a in range(20):
        x = assigned(split_plot(2 * a), "patch", "variety")
        y = assigned(split_plot(2 * a + 1), "patch", "variety")
        differing += x != y
    assert differing >= 19


def test_pheasant_insecticide_balanced_within_week(pheasant):
    per_week = collections.defaultdict(list)
    for strip, trt in assigned(pheasant, "strip", "insecticide").items():
        strip_level = next(lv for lv in pheasant.levels("strip") if lv.label == strip)
        per_week[parent_label(pheasant, strip_level, "week")].append(trt)
    assert len(per_week) == 3
    for trts in per_week.values():
        assert collections.Counter(trts) == {"insecticide1": 1, "insecticide2": 1, "insecticide3": 1}


def test_single_order_applies_to_all(pheasant):
    assert len(pheasant.assignment.orders) == 1
    assert pheasant.assignment.seed == 1


def test_motion_subjects_inherit_experiment(motion):
    # subjects carry no treatment edges; they inherit through their experiment
    trt_ids = {lv.id for f in ("frequency", "acceleration") for lv in motion.levels(f)}
    for lv in motion.levels("subject"):
        assert not set(motion.level_graph.predecessors(lv.id)) & trt_ids
    assert len(motion.levels("subject")) == 129


@pytest.mark.parametrize("order, seed, message", [
    ("random", -1, "seed"),
    ("random", 2**64, "seed"),
    ("sometimes", 0, "unknown assignment order"),
    (["random", "random", "random"], 0, "3 orders"),
])
def test_assign_errors(order, seed, message):
    d = new_design().set_units(u=4).set_trts(a=2, b=2).allot_trts("a ~ u", "b ~ u")
    with pytest.raises(DesignError, match=message):
        assign_trts(d, order, seed)


def test_assign_without_allotments():
    with pytest.raises(DesignError, match="no allotments"):
        assign_trts(new_design().set_units(u=2))


def test_completeness(pheasant):
    for a in pheasant.allotments:
        for s in a.sources:
            mapping = assigned(pheasant, pheasant.factor(a.target).name, pheasant.factor(s).name)
            assert len(mapping) == len(pheasant.levels(a.target))


# --- builder invariants over generated command sequences --------------------------------

names = st.sampled_from(["a", "b", "c", "d", "e", "f"])
steps = st.one_of(
    st.tuples(st.just("units"), names, st.one_of(st.integers(0, 4), st.tuples(names, st.integers(0, 3)))),
    st.tuples(st.just("trts"), names, st.integers(0, 4)),
    st.tuples(st.just("rcrds"), names, names),
    st.tuples(st.just("allot"), st.lists(names, min_size=1, max_size=2), names),
    st.tuples(st.just("assign"), st.sampled_from(["random", "systematic"]), st.integers(0, 50)),
)


def apply_step(d, step):
    kind = step[0]
    if kind == "units":
        _, name, spec = step
        value = spec if isinstance(spec, int) else nested_in(*spec)
        set_units(d, **{name: value})
    elif kind == "trts":
        set_trts(d, **{step[1]: step[2]})
    elif kind == "rcrds":
        set_rcrds(d, **{step[1]: step[2]})
    elif kind == "allot":
        allot_trts(d, (tuple(step[1]), step[2]))
    else:
        assign_trts(d, step[1], step[2])


@settings(max_examples=300, deadline=None)
@given(st.lists(steps, max_size=12))
def test_builder_steps_keep_graphs_valid(seq):
    d = new_design()
    for step in seq:
        try:
            apply_step(d, step)
        except DesignError:
            pass
        assert validate(d) == []
        for f in d.factor_graph.with_role(Role.UNIT):
            assert len(d.factor_graph.edges_from(f.id, EdgeKind.NESTED_IN)) <= 1
