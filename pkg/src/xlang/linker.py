"""Cross-unit resolution: parts to units, connection endpoints to ports,
couple-port direction inference, and expression identifier checks.

All failures are collected, never just the first; a LinkedModel is always
produced so downstream consumers (consistency scoring, repair notes) can
inspect partially-broken sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import expr as xexpr
from .diagnostics import Diagnostic, LinkError, error, warning
from .model import Connection, ModelUnit, PortDecl, PortDirection, UnitKind


@dataclass
class ResolvedEndpoint:
    part: str  # instance name; "" means the couple's own port
    port: str
    unit: ModelUnit | None  # owning unit (the couple itself for own ports)
    decl: PortDecl | None

    @property
    def key(self) -> tuple[str, str]:
        return self.part, self.port


@dataclass
class ResolvedConnection:
    source: ResolvedEndpoint
    target: ResolvedEndpoint
    raw: Connection


@dataclass
class InstanceNode:
    """One instance in the composition tree; path is dot-joined from the top."""

    path: str
    instance_name: str
    unit: ModelUnit
    children: dict[str, "InstanceNode"] = field(default_factory=dict)
    connections: list[ResolvedConnection] = field(default_factory=list)
    # inferred directions for this couple's own ports
    port_directions: dict[str, PortDirection] = field(default_factory=dict)

    def walk(self):
        yield self
        for name in self.children:
            yield from self.children[name].walk()


@dataclass
class LinkedModel:
    """Resolution result for one model set; `errors` may be non-empty."""

    units: dict[str, ModelUnit]
    top: str | None
    root: InstanceNode | None
    functions: dict[str, ModelUnit]
    errors: list[Diagnostic] = field(default_factory=list)
    warnings: list[Diagnostic] = field(default_factory=list)
    # call symbols used anywhere but defined by no function unit
    unresolved_calls: dict[str, list[str]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_on_errors(self) -> "LinkedModel":
        if self.errors:
            raise LinkError(self.errors)
        return self


def link_model_set(units: list[ModelUnit], top: str | None = None) -> LinkedModel:
    """Resolve a set of units under the couple designated top-level.

    When `top` is None the unique couple not instantiated by any other
    couple is used.  Atomic-only sets link with `top=None` and no tree.
    """
    errors: list[Diagnostic] = []
    warnings_: list[Diagnostic] = []
    by_name: dict[str, ModelUnit] = {}
    for unit in units:
        if unit.name in by_name:
            errors.append(
                error("link/duplicate-name", f"more than one unit named {unit.name!r}", unit.span)
            )
        else:
            by_name[unit.name] = unit

    functions = {u.name: u for u in by_name.values() if u.kind is UnitKind.FUNCTION}
    couples = [u for u in by_name.values() if u.kind is UnitKind.COUPLE]

    if top is None:
        instantiated = {p.class_name for c in couples for p in c.parts}
        roots = [c.name for c in couples if c.name not in instantiated]
        if len(roots) == 1:
            top = roots[0]
        elif couples:
            names = ", ".join(sorted(roots or [c.name for c in couples]))
            errors.append(
                error("link/ambiguous-top", f"cannot pick a top-level couple among: {names}")
            )
    if top is not None and top not in by_name:
        errors.append(error("link/unknown-class", f"top-level couple {top!r} is not defined"))
        top = None
    if top is None and couples and not errors:
        errors.append(error("link/no-top-level", "no top-level couple could be designated"))

    linked = LinkedModel(by_name, top, None, functions, errors, warnings_)

    # import resolution is a warning: consistency metrics count it, and
    # pipelines generate missing functions after hole filling
    for unit in units:
        for imp in unit.imports:
            if imp not in by_name:
                warnings_.append(
                    warning("link/unknown-import", f"{unit.name}: import {imp!r} has no unit", unit.span)
                )

    if top is not None:
        linked.root = _build_instance(top, by_name[top], by_name, "", set(), errors)

    _check_expressions(linked)
    return linked


def _build_instance(
    inst_name: str,
    unit: ModelUnit,
    by_name: dict[str, ModelUnit],
    path: str,
    seen: set[str],
    errors: list[Diagnostic],
) -> InstanceNode:
    node = InstanceNode(path, inst_name, unit)
    if unit.kind is not UnitKind.COUPLE:
        return node
    if unit.name in seen:
        errors.append(
            error("link/recursive-couple", f"couple {unit.name!r} instantiates itself", unit.span)
        )
        return node
    seen = seen | {unit.name}

    for part in unit.parts:
        child_unit = by_name.get(part.class_name)
        if child_unit is None:
            errors.append(
                error("link/unknown-class", f"part {part.instance_name!r}: no unit named {part.class_name!r}", part.span)
            )
            continue
        if child_unit.kind is UnitKind.FUNCTION:
            errors.append(
                error("link/function-part", f"part {part.instance_name!r} instantiates a function unit", part.span)
            )
            continue
        child_path = f"{path}.{part.instance_name}" if path else part.instance_name
        node.children[part.instance_name] = _build_instance(
            part.instance_name, child_unit, by_name, child_path, seen, errors
        )

    _resolve_connections(node, errors)
    return node


def _resolve_endpoint(node: InstanceNode, part: str, port: str, conn: Connection, errors, role: str) -> ResolvedEndpoint | None:
    couple = node.unit
    if part == "":
        decl = couple.port(port)
        if decl is None:
            errors.append(
                error("link/unknown-port", f"{couple.name} has no own port {port!r}", conn.span)
            )
            return None
        return ResolvedEndpoint("", port, couple, decl)
    child = node.children.get(part)
    if child is None:
        declared = {p.instance_name for p in couple.parts}
        code = "link/unknown-part" if part not in declared else "link/unknown-class"
        errors.append(error(code, f"connection {role} references unknown part {part!r}", conn.span))
        return None
    decl = child.unit.port(port)
    if decl is None:
        errors.append(
            error("link/unknown-port", f"part {part!r} ({child.unit.name}) has no port {port!r}", conn.span)
        )
        return None
    return ResolvedEndpoint(part, port, child.unit, decl)


def _resolve_connections(node: InstanceNode, errors: list[Diagnostic]):
    couple = node.unit
    own_dirs: dict[str, set[PortDirection]] = {}
    for conn in couple.connections:
        src = _resolve_endpoint(node, conn.from_part, conn.from_port, conn, errors, "source")
        dst = _resolve_endpoint(node, conn.to_part, conn.to_port, conn, errors, "target")
        if src is None or dst is None:
            continue

        # dataflow orientation: child sources must be outputs, child targets
        # inputs; the couple's own port acts as an input when it feeds
        # children (EIC) and an output when children feed it (EOC)
        if src.part == "":
            own_dirs.setdefault(src.port, set()).add(PortDirection.INPUT)
        elif src.decl.direction is PortDirection.INPUT:
            errors.append(
                error(
                    "link/direction-mismatch",
                    f"connection source {src.part}.{src.port} is an input port",
                    conn.span,
                )
            )
        if dst.part == "":
            own_dirs.setdefault(dst.port, set()).add(PortDirection.OUTPUT)
        elif dst.decl.direction is PortDirection.OUTPUT:
            errors.append(
                error(
                    "link/direction-mismatch",
                    f"connection target {dst.part}.{dst.port} is an output port",
                    conn.span,
                )
            )

        # nested couples: the child's own inferred directions must agree
        if src.part and src.unit is not None and src.unit.kind is UnitKind.COUPLE:
            child_dir = node.children[src.part].port_directions.get(src.port)
            if child_dir is PortDirection.INPUT:
                errors.append(
                    error(
                        "link/direction-mismatch",
                        f"connection source {src.part}.{src.port} is the sub-couple's input side",
                        conn.span,
                    )
                )
        if dst.part and dst.unit is not None and dst.unit.kind is UnitKind.COUPLE:
            child_dir = node.children[dst.part].port_directions.get(dst.port)
            if child_dir is PortDirection.OUTPUT:
                errors.append(
                    error(
                        "link/direction-mismatch",
                        f"connection target {dst.part}.{dst.port} is the sub-couple's output side",
                        conn.span,
                    )
                )

        if src.decl.port_type != dst.decl.port_type:
            errors.append(
                error(
                    "link/type-mismatch",
                    f"connection carries {src.decl.port_type} into {dst.decl.port_type} "
                    f"({_fmt_ep(src)} -> {_fmt_ep(dst)})",
                    conn.span,
                )
            )
        node.connections.append(ResolvedConnection(src, dst, conn))

    for port, dirs in sorted(own_dirs.items()):
        declared = couple.port(port)
        if len(dirs) > 1:
            errors.append(
                error(
                    "link/ambiguous-port-direction",
                    f"{couple.name}.{port} is used as both input and output",
                    declared.span if declared else couple.span,
                )
            )
            continue
        inferred = next(iter(dirs))
        if declared is not None and declared.direction is not None and declared.direction is not inferred:
            errors.append(
                error(
                    "link/direction-mismatch",
                    f"{couple.name}.{port} declared {declared.direction.value} but used as {inferred.value}",
                    declared.span,
                )
            )
        node.port_directions[port] = inferred


def _fmt_ep(ep: ResolvedEndpoint) -> str:
    return f"{ep.part}.{ep.port}" if ep.part else ep.port


def _check_expressions(linked: LinkedModel):
    """Validate identifier and call usage inside every atomic unit."""
    builtins = set(xexpr.BUILTINS)
    for name in sorted(linked.units):
        unit = linked.units[name]
        if unit.kind not in (UnitKind.DISCRETE, UnitKind.CONTINUOUS, UnitKind.FUNCTION):
            continue
        local = {b.name for b in unit.parameters} | {b.name for b in unit.values}
        local |= {p.name for p in unit.ports}
        if unit.kind is UnitKind.FUNCTION and unit.body is not None:
            for stmt in unit.body.statements:
                target = xexpr.assignment_target(stmt.tokens)
                if target is not None:
                    local.add(target)

        exprs = _unit_expressions(unit)
        for text in exprs:
            try:
                names, calls = xexpr.names_and_calls(text.tokens)
            except xexpr.ExprError as exc:
                linked.errors.append(
                    error("link/bad-expression", f"{unit.name}: {exc}", text.span)
                )
                continue
            for sym in sorted(calls):
                if sym in builtins or sym == "der":
                    continue
                fn = linked.functions.get(sym)
                if fn is None:
                    linked.unresolved_calls.setdefault(sym, []).append(unit.name)
                    linked.warnings.append(
                        warning("link/unresolved-call", f"{unit.name} calls undefined function {sym!r}", text.span)
                    )
                elif sym not in unit.imports:
                    linked.warnings.append(
                        warning("link/unimported-function", f"{unit.name} calls {sym!r} without importing it", text.span)
                    )
            for sym in sorted(names):
                if sym in local or sym in ("time",):
                    continue
                linked.errors.append(
                    error("link/unknown-identifier", f"{unit.name}: unknown identifier {sym!r}", text.span)
                )


def invoked_call_symbols(unit: ModelUnit) -> set[str]:
    """Function symbols called anywhere in the unit's expressions
    (builtins and der() excluded)."""
    symbols: set[str] = set()
    for text in _unit_expressions(unit):
        try:
            _, calls = xexpr.names_and_calls(text.tokens)
        except xexpr.ExprError:
            continue
        symbols |= calls
    return {s for s in symbols if s not in xexpr.BUILTINS and s != "der"}


def _unit_expressions(unit: ModelUnit):
    out = []
    if unit.states is not None:
        for state in unit.states.states:
            out.extend(state.entry_actions)
            for t in state.transforms:
                out.append(t.condition)
                out.extend(t.actions)
    out.extend(unit.equations)
    if unit.body is not None:
        out.extend(unit.body.statements)
    return out
