from __future__ import annotations

from .ast import Command, DesignSpec


def lower(spec: DesignSpec) -> list[Command]:
    """Turn a checked program into grammar verbs, in the order they must run.

    Units come first, then treatments, records, allotments and finally the
    assignment. Replaying the list on `new_design(spec.title)` rebuilds the design.
    """
    commands = []
    for verb, decls in (("set_units", spec.unit_decls), ("set_trts", spec.trt_decls),
                        ("set_rcrds", spec.rcrd_decls), ("allot_trts", spec.allot_decls)):
        if decls:
            commands.append(Command(verb, (tuple(decls),)))
    if spec.assign_decl is not None:
        commands.append(Command("assign_trts", (spec.assign_decl,)))
    return commands
