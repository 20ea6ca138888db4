"""Canonical source text for a DesignSpec; `parse(format_spec(s)) == s`."""

from __future__ import annotations

from .ast import Count, DesignSpec, Labels, NestedIn


def quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _value(spec) -> str:
    if isinstance(spec, Count):
        return str(spec.n)
    if isinstance(spec, Labels):
        return "[" + ", ".join(quote(lab) for lab in spec.labels) + "]"
    if isinstance(spec, NestedIn):
        if isinstance(spec.counts, int):
            counts = str(spec.counts)
        else:
            counts = ", ".join(f"{quote(k) if isinstance(k, str) else k} ~ {n}" for k, n in spec.counts)
        return f"nested_in({spec.parent}, {counts})"
    raise TypeError(f"not a factor structure: {spec!r}")


def format_spec(spec: DesignSpec, indent: str = "  ") -> str:
    head = "design" + (f" {quote(spec.title)}" if spec.title is not None else "") + " {"
    lines = [head]

    def block(name: str, body: list[str]) -> None:
        if body:
            lines.append(f"{indent}{name} {{")
            lines.extend(f"{indent * 2}{line}" for line in body)
            lines.append(f"{indent}}}")

    block("units", [f"{d.name} = {_value(d.spec)}" for d in spec.unit_decls])
    block("trts", [f"{d.name} = {_value(d.spec)}" for d in spec.trt_decls])
    block("rcrds", [f"{d.name} on {d.unit}" for d in spec.rcrd_decls])
    block("allot", [f"{':'.join(d.sources)} ~ {d.target}" for d in spec.allot_decls])
    a = spec.assign_decl
    if a is not None:
        orders = [o.value for o in a.orders]
        text = orders[0] if len(orders) == 1 else "[" + ", ".join(orders) + "]"
        if a.seed is not None:
            text += f" seed {a.seed}"
        lines.append(f"{indent}assign {text}")
    lines.append("}")
    return "\n".join(lines) + "\n"
