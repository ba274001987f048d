"""Simulation traces: time-stamped port-value records and trace comparison."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .diagnostics import XlangError


@dataclass(frozen=True)
class PortEvent:
    time: float
    part_path: str  # dotted instance path; "" is the top couple itself
    port: str
    value: object

    @property
    def key(self) -> tuple[str, str]:
        return self.part_path, self.port


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class SimulationTrace:
    """Ordered output events of one run, plus the final value environments."""

    events: list[PortEvent] = field(default_factory=list)
    end_time: float = 0.0
    final_values: dict[str, dict] = field(default_factory=dict)

    def port_set(self) -> set[tuple[str, str]]:
        return {e.key for e in self.events}

    def by_port(self) -> dict[tuple[str, str], list[PortEvent]]:
        grouped: dict[tuple[str, str], list[PortEvent]] = {}
        for e in self.events:
            grouped.setdefault(e.key, []).append(e)
        return grouped

    def for_part(self, part_path: str) -> "SimulationTrace":
        sub = [e for e in self.events if e.part_path == part_path]
        return SimulationTrace(sub, self.end_time, self.final_values)

    def to_tsv(self) -> str:
        lines = [
            f"{e.time!r}\t{e.part_path}\t{e.port}\t{format_value(e.value)}" for e in self.events
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def to_json_dict(self) -> dict:
        return {
            "events": [
                {"time": e.time, "part": e.part_path, "port": e.port, "value": e.value}
                for e in self.events
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


class PortSetMismatch(XlangError):
    """The two traces do not cover the same (part, port) set."""

    def __init__(self, only_actual: set, only_reference: set):
        self.only_actual = sorted(only_actual)
        self.only_reference = sorted(only_reference)
        super().__init__(
            f"port sets differ; only in actual: {self.only_actual}, only in reference: {self.only_reference}"
        )


@dataclass
class PortVerdict:
    matched: bool
    reason: str = ""


@dataclass
class TraceDiff:
    ports: dict[tuple[str, str], PortVerdict]

    @property
    def all_match(self) -> bool:
        return all(v.matched for v in self.ports.values())

    def mismatched(self) -> list[tuple[str, str]]:
        return sorted(k for k, v in self.ports.items() if not v.matched)


def compare_traces(actual: SimulationTrace, reference: SimulationTrace, tol: float = 0.0) -> TraceDiff:
    """Per-port verdicts: times exact at matching indices, values within tol."""
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    got = actual.by_port()
    want = reference.by_port()
    if set(got) != set(want):
        raise PortSetMismatch(set(got) - set(want), set(want) - set(got))

    ports: dict[tuple[str, str], PortVerdict] = {}
    for key in sorted(got):
        ports[key] = _compare_port(got[key], want[key], tol)
    return TraceDiff(ports)


def _compare_port(actual: list[PortEvent], reference: list[PortEvent], tol: float) -> PortVerdict:
    if len(actual) != len(reference):
        return PortVerdict(False, f"event count {len(actual)} != {len(reference)}")
    for i, (a, r) in enumerate(zip(actual, reference)):
        if a.time != r.time:
            return PortVerdict(False, f"event {i}: time {a.time!r} != {r.time!r}")
        if not _values_match(a.value, r.value, tol):
            return PortVerdict(False, f"event {i}: value {a.value!r} != {r.value!r}")
    return PortVerdict(True)


def _values_match(a, b, tol: float) -> bool:
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_num and b_num:
        return abs(a - b) <= tol
    return type(a) is type(b) and a == b
