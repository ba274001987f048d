"""Domain types for X-language units: the AST shared by every stage."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

from .diagnostics import Diagnostic, SourceSpan, error

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

# Registered value types; port types draw from the same table.
TYPE_TABLE = ("Real", "Int", "Bool", "String")

RESERVED = frozenset(
    """couple discrete continuous function import part parameter value port
    connection state equation body end initial when entry then transform
    statehold input output connect and or not true false inf""".split()
)


class UnitKind(str, Enum):
    COUPLE = "couple"
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"
    FUNCTION = "function"


class PortDirection(str, Enum):
    INPUT = "input"
    OUTPUT = "output"


def is_identifier(text: str) -> bool:
    return bool(IDENT_RE.match(text)) and text not in RESERVED


def parse_literal(data_type: str, text: str):
    """Parse a literal of the given registered type; raises ValueError."""
    text = text.strip()
    if data_type == "Real":
        if text in ("inf", "-inf"):
            return math.inf if text == "inf" else -math.inf
        return float(text)
    if data_type == "Int":
        return int(text)
    if data_type == "Bool":
        if text in ("true", "false"):
            return text == "true"
        raise ValueError(f"not a Bool literal: {text!r}")
    if data_type == "String":
        if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
            return text[1:-1]
        raise ValueError(f"not a String literal: {text!r}")
    raise ValueError(f"unregistered type {data_type!r}")


def zero_value(data_type: str):
    return {"Real": 0.0, "Int": 0, "Bool": False, "String": ""}[data_type]


_DUMMY = SourceSpan()


@dataclass(frozen=True)
class ExprText:
    """Validated token text for expressions, actions, and equations.

    Tokens are stored rather than raw source so whitespace never breaks
    round-trips; parentheses balance was checked by the parser.  Full
    expression parsing happens in the simulation kernel.
    """

    tokens: tuple[str, ...]
    span: SourceSpan = field(default=_DUMMY, compare=False)

    @property
    def text(self) -> str:
        return render_tokens(self.tokens)

    def __str__(self) -> str:
        return self.text


_OPENERS = frozenset({"(", ",", "=", "+", "-", "*", "/", "<", ">", "<=", ">=", "==", "!=", "and", "or", "not"})


def render_tokens(tokens: tuple[str, ...] | list[str]) -> str:
    """Join expression tokens into readable text that re-lexes identically."""
    parts: list[str] = []
    for i, tok in enumerate(tokens):
        if i == 0:
            parts.append(tok)
            continue
        prev = tokens[i - 1]
        callable_prev = prev == ")" or (IDENT_RE.match(prev) and prev not in ("and", "or", "not"))
        tight = (
            tok in (")", ",", ";", ".")
            or prev in ("(", ".")
            or (tok == "(" and callable_prev)
            # unary minus binds to its operand
            or (prev == "-" and (i == 1 or tokens[i - 2] in _OPENERS))
        )
        parts.append(tok if tight else " " + tok)
    return "".join(parts)


@dataclass(frozen=True)
class TypedBinding:
    """`<DataType> <name> = <literal>` in parameter/value sections."""

    data_type: str
    name: str
    initial: str | None = None
    span: SourceSpan = field(default=_DUMMY, compare=False)


@dataclass(frozen=True)
class PortDecl:
    """Port of a unit; direction is None only on couple ports pre-link."""

    direction: PortDirection | None
    port_type: str
    name: str
    initial: str | None = None
    span: SourceSpan = field(default=_DUMMY, compare=False)


@dataclass(frozen=True)
class PartDecl:
    """`<ClassName> <instance_name>;` inside a couple."""

    class_name: str
    instance_name: str
    span: SourceSpan = field(default=_DUMMY, compare=False)


@dataclass(frozen=True)
class Connection:
    """Directed connection; an empty part string means the couple's own port."""

    from_part: str
    from_port: str
    to_part: str
    to_port: str
    span: SourceSpan = field(default=_DUMMY, compare=False)

    def endpoints(self) -> tuple[tuple[str, str], tuple[str, str]]:
        return (self.from_part, self.from_port), (self.to_part, self.to_port)


@dataclass(frozen=True)
class Transform:
    """`when <cond> transform <target> then <actions> end;`"""

    condition: ExprText
    target: str
    actions: tuple[ExprText, ...] = ()
    span: SourceSpan = field(default=_DUMMY, compare=False)


@dataclass(frozen=True)
class StateDef:
    """One state block; statehold None means the state never expires."""

    name: str
    statehold: float | None = None
    entry_actions: tuple[ExprText, ...] = ()
    transforms: tuple[Transform, ...] = ()
    span: SourceSpan = field(default=_DUMMY, compare=False)


@dataclass(frozen=True)
class StateMachine:
    initial_state: str
    states: tuple[StateDef, ...]
    span: SourceSpan = field(default=_DUMMY, compare=False)

    def state(self, name: str) -> StateDef:
        for s in self.states:
            if s.name == name:
                return s
        raise KeyError(name)


@dataclass(frozen=True)
class FunctionBody:
    """Assignment statements followed by a final `return <expr>;`."""

    statements: tuple[ExprText, ...]
    span: SourceSpan = field(default=_DUMMY, compare=False)


@dataclass(frozen=True)
class ModelUnit:
    """AST of one X-language class, the toolkit's universal currency."""

    kind: UnitKind
    name: str
    imports: tuple[str, ...] = ()
    parameters: tuple[TypedBinding, ...] = ()
    values: tuple[TypedBinding, ...] = ()
    ports: tuple[PortDecl, ...] = ()
    parts: tuple[PartDecl, ...] = ()
    connections: tuple[Connection, ...] = ()
    states: StateMachine | None = None
    equations: tuple[ExprText, ...] = ()
    body: FunctionBody | None = None
    span: SourceSpan = field(default=_DUMMY, compare=False)

    def port(self, name: str) -> PortDecl | None:
        for p in self.ports:
            if p.name == name:
                return p
        return None

    def output_ports(self) -> list[PortDecl]:
        return [p for p in self.ports if p.direction is PortDirection.OUTPUT]

    def input_ports(self) -> list[PortDecl]:
        return [p for p in self.ports if p.direction is PortDirection.INPUT]


# Sections each kind may carry (beyond name/imports, which all kinds have).
PERMITTED_SECTIONS: dict[UnitKind, frozenset[str]] = {
    UnitKind.COUPLE: frozenset({"part", "parameter", "port", "value", "connection"}),
    UnitKind.DISCRETE: frozenset({"parameter", "value", "port", "state"}),
    UnitKind.CONTINUOUS: frozenset({"parameter", "value", "port", "equation"}),
    UnitKind.FUNCTION: frozenset({"parameter", "body"}),
}


def validate_unit(unit: ModelUnit) -> list[Diagnostic]:
    """Check unit-local invariants; cross-unit checks belong to the linker."""
    diags: list[Diagnostic] = []

    def err(code: str, message: str, span: SourceSpan | None = None, **data):
        diags.append(error(code, message, span or unit.span, **data))

    if not is_identifier(unit.name):
        err("unit/bad-name", f"unit name {unit.name!r} is not a valid identifier")

    for binding in (*unit.parameters, *unit.values):
        if binding.data_type not in TYPE_TABLE:
            err("unit/unknown-type", f"unknown type {binding.data_type!r}", binding.span)
        elif binding.initial is not None:
            try:
                parse_literal(binding.data_type, binding.initial)
            except ValueError:
                err(
                    "unit/bad-initial",
                    f"{binding.initial!r} is not a {binding.data_type} literal",
                    binding.span,
                )

    seen_ports: set[str] = set()
    for p in unit.ports:
        if p.name in seen_ports:
            err("unit/duplicate-port", f"duplicate port {p.name!r}", p.span)
        seen_ports.add(p.name)
        if p.port_type not in TYPE_TABLE:
            err("unit/unknown-type", f"unknown port type {p.port_type!r}", p.span)
        elif p.initial is not None:
            try:
                parse_literal(p.port_type, p.initial)
            except ValueError:
                err("unit/bad-initial", f"{p.initial!r} is not a {p.port_type} literal", p.span)
        if unit.kind in (UnitKind.DISCRETE, UnitKind.CONTINUOUS) and p.direction is None:
            err("unit/port-direction-required", f"atomic port {p.name!r} needs input/output", p.span)

    seen_parts: set[str] = set()
    for part in unit.parts:
        if part.instance_name in seen_parts:
            err("unit/duplicate-part", f"duplicate part instance {part.instance_name!r}", part.span)
        seen_parts.add(part.instance_name)
        if part.class_name not in unit.imports:
            err(
                "unit/unimported-part",
                f"part class {part.class_name!r} does not appear in imports",
                part.span,
            )

    if unit.states is not None:
        names = [s.name for s in unit.states.states]
        dupes = {n for n in names if names.count(n) > 1}
        for d in sorted(dupes):
            err("unit/duplicate-state", f"duplicate state {d!r}", unit.states.span)
        if unit.states.initial_state not in names:
            err(
                "unit/unknown-initial-state",
                f"initial state {unit.states.initial_state!r} is not declared",
                unit.states.span,
            )
        for s in unit.states.states:
            if s.statehold is not None and not s.statehold >= 0:
                err("unit/negative-statehold", f"statehold of {s.name!r} must be >= 0", s.span)
            for t in s.transforms:
                if t.target not in names:
                    err(
                        "unit/unknown-transform-target",
                        f"transform targets unknown state {t.target!r}",
                        t.span,
                    )

    if unit.kind is UnitKind.FUNCTION and unit.body is None:
        err("unit/missing-body", "function unit needs a body section")
    if unit.body is not None:
        stmts = unit.body.statements
        if not stmts or stmts[-1].tokens[:1] != ("return",):
            err("unit/missing-return", "function body must end with `return <expr>;`", unit.body.span)

    permitted = PERMITTED_SECTIONS[unit.kind]
    present = {
        "part": bool(unit.parts),
        "connection": bool(unit.connections),
        "state": unit.states is not None,
        "equation": bool(unit.equations),
        "body": unit.body is not None,
        "port": bool(unit.ports),
        "value": bool(unit.values),
        "parameter": bool(unit.parameters),
    }
    for section, there in sorted(present.items()):
        if there and section not in permitted:
            err(
                "unit/section-not-permitted",
                f"section {section!r} is not permitted in a {unit.kind.value} unit",
            )
    return diags
