"""Canonical text emission for ModelUnits.

Sections always print in template order regardless of how the source
ordered them, so parse -> print -> parse is a fixed point and generated
models diff cleanly.
"""

from __future__ import annotations

from .model import ModelUnit, StateDef, UnitKind

# Template order per kind.
SECTION_ORDER: dict[UnitKind, tuple[str, ...]] = {
    UnitKind.COUPLE: ("part", "parameter", "port", "value", "connection"),
    UnitKind.DISCRETE: ("parameter", "value", "port", "state"),
    UnitKind.CONTINUOUS: ("parameter", "value", "port", "equation"),
    UnitKind.FUNCTION: ("parameter", "body"),
}


def print_unit(unit: ModelUnit) -> str:
    """Emit canonical X text for one unit (trailing newline included)."""
    lines: list[str] = [f"{unit.kind.value} {unit.name}"]
    for imp in unit.imports:
        lines.append(f"  import {imp};")
    for section in SECTION_ORDER[unit.kind]:
        lines.extend(section_lines(unit, section))
    lines.append("end;")
    return "\n".join(lines) + "\n"


def print_units(units: list[ModelUnit]) -> str:
    return "\n".join(print_unit(u) for u in units)


def section_lines(unit: ModelUnit, section: str) -> list[str]:
    """Lines for one section, header included; [] when the section is empty."""
    body: list[str] = []
    if section == "part":
        body = [f"  {p.class_name} {p.instance_name};" for p in unit.parts]
    elif section == "parameter":
        body = [_binding_line(b) for b in unit.parameters]
    elif section == "value":
        body = [_binding_line(b) for b in unit.values]
    elif section == "port":
        for p in unit.ports:
            head = f"{p.direction.value} " if p.direction else ""
            init = f" = {p.initial}" if p.initial is not None else ""
            body.append(f"  {head}{p.port_type} {p.name}{init};")
    elif section == "connection":
        for c in unit.connections:
            src = f"{c.from_part}.{c.from_port}" if c.from_part else c.from_port
            dst = f"{c.to_part}.{c.to_port}" if c.to_part else c.to_port
            body.append(f"  connect({src}, {dst});")
    elif section == "state":
        if unit.states is not None:
            for s in unit.states.states:
                body.extend(_state_lines(s, s.name == unit.states.initial_state))
    elif section == "equation":
        body = [f"  {eq.text};" for eq in unit.equations]
    elif section == "body":
        if unit.body is not None:
            body = [f"  {stmt.text};" for stmt in unit.body.statements]
    if not body:
        return []
    return [f"{section}:"] + body


def _binding_line(binding) -> str:
    init = f" = {binding.initial}" if binding.initial is not None else ""
    return f"  {binding.data_type} {binding.name}{init};"


def _format_time(value: float) -> str:
    if value == float("inf"):
        return "inf"
    if value == int(value):
        return str(int(value))
    return repr(value)


def _state_lines(state: StateDef, is_initial: bool) -> list[str]:
    head = "initial state" if is_initial else "state"
    lines = [f"  {head} {state.name}"]
    if state.statehold is not None or state.entry_actions:
        lines.append("    when entry() then")
        if state.statehold is not None:
            lines.append(f"      statehold({_format_time(state.statehold)});")
        for action in state.entry_actions:
            lines.append(f"      {action.text};")
        lines.append("    end;")
    for t in state.transforms:
        lines.append(f"    when {t.condition.text} transform {t.target} then")
        for action in t.actions:
            lines.append(f"      {action.text};")
        lines.append("    end;")
    lines.append("  end;")
    return lines
