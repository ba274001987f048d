"""Scalable templates: couple skeletons populated from extracted
composition/connections, atomic skeletons with ports derived from the
connection table, and explicit `/*HOLE:...*/` markers for the sections a
generator completes."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .diagnostics import Diagnostic, XlangError, warning
from .model import Connection, ModelUnit, PartDecl, PortDecl, PortDirection, UnitKind
from .parser import parse_unit
from .printer import SECTION_ORDER, section_lines


class TemplateError(XlangError):
    pass


class UnknownPart(TemplateError):
    """A connection references a part the couple does not contain."""


class Hole(str, Enum):
    VALUE = "Value"
    STATE = "State"
    EQUATION = "Equation"
    FUNCTION_BODY = "FunctionBody"


HOLE_SECTION = {
    Hole.VALUE: "value",
    Hole.STATE: "state",
    Hole.EQUATION: "equation",
    Hole.FUNCTION_BODY: "body",
}
SECTION_HOLE = {v: k for k, v in HOLE_SECTION.items()}

_SECTION_LINE_RE = re.compile(r"^\s*(part|parameter|value|port|connection|state|equation|body)\s*:", re.M)


def hole_marker(hole: Hole) -> str:
    return f"/*HOLE:{hole.value}*/"


@dataclass(frozen=True)
class PortSpec:
    """Algorithm output: a direction-tagged, type-reasoned port."""

    direction: PortDirection
    port_type: str
    name: str


class PortConvention(str, Enum):
    # dataflow: first endpoint is the source, so it is that part's output
    DATAFLOW = "dataflow"
    # paper-literal: first endpoint labeled input, second output, exactly
    # as the extraction algorithm prints its labels
    PAPER_LITERAL = "paper-literal"


@dataclass(frozen=True)
class TemplateInstance:
    """A partially filled unit plus the holes a generator still owes us."""

    kind: UnitKind
    unit: ModelUnit
    holes: frozenset[Hole]
    filled_texts: tuple[tuple[Hole, str], ...] = ()

    def __post_init__(self):
        for hole in self.holes:
            section = HOLE_SECTION[hole]
            present = {
                "value": bool(self.unit.values),
                "state": self.unit.states is not None,
                "equation": bool(self.unit.equations),
                "body": self.unit.body is not None,
            }[section]
            if present:
                raise TemplateError(f"hole {hole.value} overlaps a section already filled")

    def _filled(self) -> dict[Hole, str]:
        return dict(self.filled_texts)

    def render(self, include_markers: bool = True) -> str:
        """Canonical text; unfilled holes become markers (or vanish)."""
        lines: list[str] = [f"{self.kind.value} {self.unit.name}"]
        for imp in self.unit.imports:
            lines.append(f"  import {imp};")
        filled = self._filled()
        for section in SECTION_ORDER[self.kind]:
            hole = SECTION_HOLE.get(section)
            if hole is not None and hole in filled:
                lines.append(filled[hole].strip("\n"))
                continue
            if hole is not None and hole in self.holes:
                if include_markers:
                    lines.append(hole_marker(hole))
                continue
            lines.extend(section_lines(self.unit, section))
        lines.append("end;")
        return "\n".join(lines) + "\n"

    def render_without_holes(self) -> str:
        return self.render(include_markers=False)

    def fill(self, hole: Hole, text: str) -> "TemplateInstance":
        """Splice generated text at a hole.

        If the text also carries other open holes' sections (value and
        state are generated together), those holes close too.
        """
        if hole not in self.holes:
            raise TemplateError(f"{hole.value} is not an open hole")
        covered = {SECTION_HOLE[kw] for kw in _SECTION_LINE_RE.findall(text) if kw in SECTION_HOLE}
        closed = {hole} | (covered & self.holes)
        return TemplateInstance(
            self.kind,
            self.unit,
            frozenset(self.holes - closed),
            self.filled_texts + ((hole, text),),
        )

    def to_unit(self) -> ModelUnit:
        """Parse the rendered text; open holes read as empty sections."""
        return parse_unit(self.render_without_holes())


def build_couple(composition_node, connections: list[Connection], naming=None) -> TemplateInstance:
    """Populate the couple template from one composition node.

    Imports and parts come from the node's children, the connection
    section from the given list; the result has no holes.
    """
    from .docpipe import NameMap  # local import: docpipe pulls templates too

    naming = naming or NameMap()
    children = list(composition_node.children)
    if not children:
        raise TemplateError(f"composition node {composition_node.name!r} has no children")

    parts = []
    instances = set()
    imports = []
    for child in children:
        class_name = naming.class_for(child.name)
        instance = naming.instance_for(child.name)
        imports.append(class_name)
        parts.append(PartDecl(class_name, instance))
        instances.add(instance)

    for conn in connections:
        for part in (conn.from_part, conn.to_part):
            if part and part not in instances:
                raise UnknownPart(f"connection references {part!r}, not a child of {composition_node.name!r}")

    unit = ModelUnit(
        kind=UnitKind.COUPLE,
        name=naming.class_for(composition_node.name),
        imports=tuple(imports),
        parts=tuple(parts),
        connections=tuple(connections),
    )
    return TemplateInstance(UnitKind.COUPLE, unit, frozenset())


def extract_subsystem_ports(
    connections: list[Connection],
    part_name: str,
    type_reasoner,
    convention: PortConvention = PortConvention.DATAFLOW,
    diagnostics: list[Diagnostic] | None = None,
) -> list[PortSpec]:
    """Derive a part's port list from the couple's connection table.

    Under the dataflow convention a part's first-position (source)
    endpoints become its outputs and second-position endpoints its
    inputs; the paper-literal convention labels them the other way
    around.  Duplicates collapse on (direction, name).
    """
    if convention is PortConvention.DATAFLOW:
        first_dir, second_dir = PortDirection.OUTPUT, PortDirection.INPUT
    else:
        first_dir, second_dir = PortDirection.INPUT, PortDirection.OUTPUT

    specs: list[PortSpec] = []
    seen: set[tuple[PortDirection, str]] = set()

    def add(direction: PortDirection, port: str):
        key = (direction, port)
        if key in seen:
            return
        seen.add(key)
        specs.append(PortSpec(direction, type_reasoner.reason(part_name, port), port))

    for conn in connections:
        if conn.from_part == part_name:
            add(first_dir, conn.from_port)
        if conn.to_part == part_name:
            add(second_dir, conn.to_port)

    if diagnostics is not None:
        both = {s.name for s in specs if s.direction is PortDirection.INPUT} & {
            s.name for s in specs if s.direction is PortDirection.OUTPUT
        }
        for name in sorted(both):
            diagnostics.append(
                warning(
                    "template/bidirectional-port",
                    f"port {name!r} of {part_name!r} is used in both positions; emitting both directions",
                )
            )
    return specs


def make_atomic_skeleton(part: PartDecl, ports: list[PortSpec], kind: UnitKind) -> TemplateInstance:
    """Header and port section filled; value plus state/equation left open."""
    if kind not in (UnitKind.DISCRETE, UnitKind.CONTINUOUS):
        raise TemplateError(f"atomic skeletons are discrete or continuous, not {kind.value}")
    unit = ModelUnit(
        kind=kind,
        name=part.class_name,
        ports=tuple(PortDecl(s.direction, s.port_type, s.name) for s in ports),
    )
    holes = {Hole.VALUE, Hole.STATE if kind is UnitKind.DISCRETE else Hole.EQUATION}
    return TemplateInstance(kind, unit, frozenset(holes))


class StaticPortTypes:
    """Offline port-type reasoner: table lookup with a default."""

    def __init__(self, table: dict[str, str] | None = None, default: str = "Real"):
        self.table = dict(table or {})
        self.default = default

    def reason(self, part: str, port: str) -> str:
        return self.table.get(f"{part}.{port}") or self.table.get(port, self.default)


class GeneratorPortTypes:
    """Asks a generator backend to reason a port's value type from its
    name and the model description; falls back to the static table."""

    def __init__(self, backend, description: str = "", fallback: StaticPortTypes | None = None, limits=None):
        self.backend = backend
        self.description = description
        self.fallback = fallback or StaticPortTypes()
        self.limits = limits

    def reason(self, part: str, port: str) -> str:
        from .prompts import CompletionLimits, build_port_type_prompt

        bundle = build_port_type_prompt(part, port, self.description)
        try:
            reply = self.backend.complete(bundle, self.limits or CompletionLimits())
        except Exception:
            return self.fallback.reason(part, port)
        for word in re.findall(r"[A-Za-z]+", reply):
            if word in ("Real", "Int", "Bool", "String"):
                return word
        return self.fallback.reason(part, port)
