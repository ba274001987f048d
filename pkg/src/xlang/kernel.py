"""Event-driven execution of linked models.

Discrete units run as state machines (states, statehold clocks, condition
transforms); continuous units advance on a global fixed step with an
explicit Euler or RK4 integrator and exchange port values at step
boundaries and at event times.  One run is single-threaded and
deterministic: simultaneous events are processed in lexicographic
instance-path order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

from . import expr as xexpr
from .diagnostics import RuntimeFault, XlangError
from .linker import InstanceNode, LinkedModel
from .model import ModelUnit, PortDirection, UnitKind, parse_literal, zero_value
from .trace import PortEvent, SimulationTrace


class Integrator(str, Enum):
    EULER = "euler"
    RK4 = "rk4"


@dataclass
class SimulationConfig:
    end_time: float
    continuous_step: float = 1.0
    integrator: Integrator = Integrator.EULER
    seed: int = 0
    max_cascade_rounds: int = 1000

    def __post_init__(self):
        if isinstance(self.integrator, str):
            self.integrator = Integrator(self.integrator)
        if not self.continuous_step > 0:
            raise ValueError("continuous_step must be > 0")
        if self.end_time < 0:
            raise ValueError("end_time must be >= 0")


class UnknownTransformTarget(XlangError):
    """A transform names a state the machine does not have (kernel bug
    if it survives linking)."""


@lru_cache(maxsize=None)
def _parsed(tokens: tuple[str, ...]):
    return xexpr.parse_expr(tokens)


def initial_env(unit: ModelUnit) -> dict:
    env: dict = {}
    for b in (*unit.parameters, *unit.values):
        env[b.name] = parse_literal(b.data_type, b.initial) if b.initial is not None else zero_value(b.data_type)
    for p in unit.ports:
        env[p.name] = parse_literal(p.port_type, p.initial) if p.initial is not None else zero_value(p.port_type)
    return env


@dataclass
class AtomicRuntime:
    """Execution state of one discrete instance."""

    unit: ModelUnit
    path: str
    current_state: str
    value_env: dict
    time_of_last_event: float = 0.0
    time_advance: float = math.inf
    pending_outputs: list[PortEvent] = field(default_factory=list)

    @property
    def next_internal(self) -> float:
        return self.time_of_last_event + self.time_advance

    def copy(self) -> "AtomicRuntime":
        return replace(self, value_env=dict(self.value_env), pending_outputs=list(self.pending_outputs))


class _UnitProgram:
    """Pre-resolved execution helpers shared by every step of one unit."""

    def __init__(self, unit: ModelUnit, evaluator: xexpr.Evaluator):
        self.unit = unit
        self.evaluator = evaluator
        self.parameters = {b.name for b in unit.parameters}
        self.outputs = {p.name for p in unit.ports if p.direction is PortDirection.OUTPUT}
        self.states = {s.name: s for s in unit.states.states} if unit.states else {}

    def run_actions(self, rt: AtomicRuntime, actions, now: float) -> list[PortEvent]:
        events: list[PortEvent] = []
        for action in actions:
            pieces = xexpr.split_assignment(action.tokens)
            try:
                if pieces is None:
                    self.evaluator.eval(_parsed(action.tokens), rt.value_env, now)
                    continue
                target, rhs = pieces
                value = self.evaluator.eval(_parsed(rhs), rt.value_env, now)
            except xexpr.ExprError as exc:
                raise RuntimeFault(now, rt.path, str(exc)) from exc
            if target in self.parameters:
                raise RuntimeFault(now, rt.path, f"assignment to parameter {target!r}")
            if target not in rt.value_env:
                raise RuntimeFault(now, rt.path, f"assignment to unknown name {target!r}")
            rt.value_env[target] = value
            if target in self.outputs:
                events.append(PortEvent(now, rt.path, target, value))
        return events

    def enter(self, rt: AtomicRuntime, state_name: str, now: float) -> list[PortEvent]:
        state = self.states.get(state_name)
        if state is None:
            raise UnknownTransformTarget(f"{rt.path}: no state named {state_name!r}")
        rt.current_state = state_name
        rt.time_of_last_event = now
        rt.time_advance = state.statehold if state.statehold is not None else math.inf
        return self.run_actions(rt, state.entry_actions, now)

    def fire_first_transform(self, rt: AtomicRuntime, now: float) -> list[PortEvent] | None:
        """Run the first transform whose condition holds; None if none does."""
        state = self.states[rt.current_state]
        for t in state.transforms:
            try:
                hold = self.evaluator.eval(_parsed(t.condition.tokens), rt.value_env, now)
            except xexpr.ExprError as exc:
                raise RuntimeFault(now, rt.path, f"condition `{t.condition.text}`: {exc}") from exc
            if not isinstance(hold, bool):
                raise RuntimeFault(now, rt.path, f"condition `{t.condition.text}` is not boolean")
            if hold:
                events = self.run_actions(rt, t.actions, now)
                events.extend(self.enter(rt, t.target, now))
                return events
        return None

    def external(self, rt: AtomicRuntime, inputs: list[PortEvent], now: float) -> list[PortEvent]:
        for event in inputs:
            rt.value_env[event.port] = event.value
        events = self.fire_first_transform(rt, now)
        # no matching transform: the input is absorbed, the clock unchanged
        return events if events is not None else []

    def internal(self, rt: AtomicRuntime, now: float) -> list[PortEvent]:
        events = self.fire_first_transform(rt, now)
        if events is None:
            # implicit self-loop: re-enter the state, restart its clock
            events = self.enter(rt, rt.current_state, now)
        return events


def make_atomic_runtime(unit: ModelUnit, path: str, functions: dict | None = None) -> AtomicRuntime:
    """Fresh runtime in its initial state (entry actions not yet run)."""
    if unit.kind is not UnitKind.DISCRETE:
        raise ValueError(f"{unit.name} is not a discrete unit")
    initial = unit.states.initial_state if unit.states else ""
    return AtomicRuntime(unit, path, initial, initial_env(unit))


def step_atomic(
    rt: AtomicRuntime,
    inputs: list[PortEvent],
    now: float,
    functions: dict | None = None,
) -> tuple[AtomicRuntime, list[PortEvent]]:
    """One transition: external when inputs arrive, else internal at expiry.

    Functional: the argument runtime is left untouched.
    """
    if now < rt.time_of_last_event:
        raise ValueError("time cannot run backwards")
    program = _UnitProgram(rt.unit, xexpr.Evaluator(functions or {}))
    out = rt.copy()
    if inputs:
        events = program.external(out, inputs, now)
    elif now == out.next_internal:
        events = program.internal(out, now)
    else:
        events = []
    out.pending_outputs = list(events)
    return out, events


class ContinuousRuntime:
    """Execution state of one continuous instance."""

    def __init__(self, unit: ModelUnit, path: str, evaluator: xexpr.Evaluator):
        self.unit = unit
        self.path = path
        self.evaluator = evaluator
        self.env = initial_env(unit)
        self.derivatives: list[tuple[str, object]] = []
        self.algebraic: list[tuple[str, object]] = []
        for eq in unit.equations:
            der = xexpr.derivative_target(eq.tokens)
            if der is not None:
                target, rhs = der
                self.derivatives.append((target, _parsed(rhs)))
                continue
            pieces = xexpr.split_assignment(eq.tokens)
            if pieces is None:
                raise RuntimeFault(0.0, path, f"equation `{eq.text}` is neither der() nor assignment")
            target, rhs = pieces
            self.algebraic.append((target, _parsed(rhs)))
        self.outputs = [p.name for p in unit.ports if p.direction is PortDirection.OUTPUT]
        self.state_names = [name for name, _ in self.derivatives]
        for name, _ in self.derivatives + self.algebraic:
            if name not in self.env:
                raise RuntimeFault(0.0, path, f"equation assigns unknown name {name!r}")

    def refresh(self, now: float):
        for target, tree in self.algebraic:
            try:
                self.env[target] = self.evaluator.eval(tree, self.env, now)
            except xexpr.ExprError as exc:
                raise RuntimeFault(now, self.path, str(exc)) from exc

    def _derivative_vector(self, states: list[float], now: float) -> list[float]:
        for name, value in zip(self.state_names, states):
            self.env[name] = value
        self.refresh(now)
        out = []
        for name, tree in self.derivatives:
            try:
                value = self.evaluator.eval(tree, self.env, now)
            except xexpr.ExprError as exc:
                raise RuntimeFault(now, self.path, f"der({name}): {exc}") from exc
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise RuntimeFault(now, self.path, f"der({name}) is not numeric")
            out.append(float(value))
        return out

    def integrate(self, t: float, dt: float, method: Integrator):
        if not self.derivatives:
            self.refresh(t + dt)
            return
        y0 = [float(self.env[name]) for name in self.state_names]
        if method is Integrator.EULER:
            k1 = self._derivative_vector(y0, t)
            y1 = [y + dt * k for y, k in zip(y0, k1)]
        else:
            k1 = self._derivative_vector(y0, t)
            k2 = self._derivative_vector([y + 0.5 * dt * k for y, k in zip(y0, k1)], t + 0.5 * dt)
            k3 = self._derivative_vector([y + 0.5 * dt * k for y, k in zip(y0, k2)], t + 0.5 * dt)
            k4 = self._derivative_vector([y + dt * k for y, k in zip(y0, k3)], t + dt)
            y1 = [
                y + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
                for y, a, b, c, d in zip(y0, k1, k2, k3, k4)
            ]
        for name, value in zip(self.state_names, y1):
            self.env[name] = value
        self.refresh(t + dt)

    def sample(self, now: float) -> list[PortEvent]:
        return [PortEvent(now, self.path, port, self.env[port]) for port in self.outputs]

    def deliver(self, event: PortEvent):
        self.env[event.port] = event.value


@dataclass
class CoupledRuntime:
    """Structural runtime for one couple: children plus its routing table."""

    node: InstanceNode
    children: dict[str, object]
    routing: list[tuple[tuple[str, str], tuple[str, str]]]  # (src key, dst key)


class Simulator:
    """Flattens a linked model and advances it to end_time."""

    def __init__(self, linked: LinkedModel, config: SimulationConfig):
        linked.raise_on_errors()
        if linked.root is None:
            raise ValueError("model set has no top-level couple to simulate")
        self.linked = linked
        self.config = config
        self.evaluator = xexpr.Evaluator(linked.functions)
        self.discrete: dict[str, AtomicRuntime] = {}
        self.programs: dict[str, _UnitProgram] = {}
        self.continuous: dict[str, ContinuousRuntime] = {}
        self.coupled: dict[str, CoupledRuntime] = {}
        self.parents: dict[str, InstanceNode | None] = {}
        self._instantiate(linked.root, None)
        self.routes, self.taps = self._build_routes()
        self.trace: list[PortEvent] = []
        self.deliveries: list[PortEvent] = []
        self.queue: list[PortEvent] = []

    # -- construction -----------------------------------------------------

    def _instantiate(self, node: InstanceNode, parent: InstanceNode | None):
        self.parents[node.path] = parent
        if node.unit.kind is UnitKind.COUPLE:
            self.coupled[node.path] = CoupledRuntime(
                node,
                {name: None for name in node.children},
                [(c.source.key, c.target.key) for c in node.connections],
            )
            for name in node.children:
                self._instantiate(node.children[name], node)
            for name in node.children:
                child = node.children[name].path
                self.coupled[node.path].children[name] = (
                    self.discrete.get(child) or self.continuous.get(child) or self.coupled.get(child)
                )
        elif node.unit.kind is UnitKind.DISCRETE:
            rt = make_atomic_runtime(node.unit, node.path)
            self.discrete[node.path] = rt
            self.programs[node.path] = _UnitProgram(node.unit, self.evaluator)
        elif node.unit.kind is UnitKind.CONTINUOUS:
            self.continuous[node.path] = ContinuousRuntime(node.unit, node.path, self.evaluator)

    def _build_routes(self):
        """Flatten couple-level coupling into atomic-to-atomic routes.

        Returns (routes, taps): routes maps a source (path, port) to final
        atomic destinations; taps lists couple own-port crossings (EOC) to
        record in the trace.
        """
        routes: dict[tuple[str, str], list[tuple[str, str]]] = {}
        taps: dict[tuple[str, str], list[tuple[str, str]]] = {}
        for path in sorted({**self.discrete, **self.continuous}):
            node = self._node_at(path)
            unit = node.unit
            for port in unit.ports:
                if port.direction is not PortDirection.OUTPUT:
                    continue
                dests: list[tuple[str, str]] = []
                crossings: list[tuple[str, str]] = []
                parent = self.parents[path]
                if parent is not None:
                    self._trace_route(parent, (node.instance_name, port.name), dests, crossings, set())
                if dests:
                    routes[(path, port.name)] = dests
                if crossings:
                    taps[(path, port.name)] = crossings
        return routes, taps

    def _trace_route(self, couple: InstanceNode, source_key, dests, crossings, seen):
        marker = (couple.path, source_key)
        if marker in seen:
            return
        seen.add(marker)
        for conn in couple.connections:
            if conn.source.key != source_key:
                continue
            part, port = conn.target.key
            if part == "":
                # EOC: out through the couple's own port
                crossings.append((couple.path, port))
                parent = self.parents[couple.path]
                if parent is not None:
                    self._trace_route(parent, (couple.instance_name, port), dests, crossings, seen)
                continue
            child = couple.children.get(part)
            if child is None:
                continue
            if child.unit.kind is UnitKind.COUPLE:
                # EIC into the sub-couple
                self._trace_route(child, ("", port), dests, crossings, seen)
            else:
                dests.append((child.path, port))

    def _node_at(self, path: str) -> InstanceNode:
        node = self.linked.root
        if path:
            for piece in path.split("."):
                node = node.children[piece]
        return node

    # -- event machinery ----------------------------------------------------

    def _emit(self, events: list[PortEvent]):
        for event in events:
            self.trace.append(event)
            for couple_path, port in self.taps.get(event.key, ()):
                self.trace.append(PortEvent(event.time, couple_path, port, event.value))
            self.queue.append(event)

    def _deliver_round(self, now: float):
        batch = self.queue
        self.queue = []
        inbox: dict[str, list[PortEvent]] = {}
        for event in batch:
            for dest_path, dest_port in self.routes.get(event.key, ()):
                delivered = PortEvent(now, dest_path, dest_port, event.value)
                self.deliveries.append(delivered)
                inbox.setdefault(dest_path, []).append(delivered)
        for dest_path in sorted(inbox):
            if dest_path in self.discrete:
                rt = self.discrete[dest_path]
                events = self.programs[dest_path].external(rt, inbox[dest_path], now)
                self._emit(events)
            elif dest_path in self.continuous:
                for event in inbox[dest_path]:
                    self.continuous[dest_path].deliver(event)

    def _settle(self, now: float):
        rounds = 0
        while True:
            progressed = False
            imminent = sorted(p for p, rt in self.discrete.items() if rt.next_internal == now)
            for path in imminent:
                events = self.programs[path].internal(self.discrete[path], now)
                self._emit(events)
                progressed = True
            if self.queue:
                self._deliver_round(now)
                progressed = True
            if not progressed:
                return
            rounds += 1
            if rounds > self.config.max_cascade_rounds:
                raise RuntimeFault(now, "", "event cascade did not settle (non-converging condition)")

    def _sample_continuous(self, now: float):
        for path in sorted(self.continuous):
            self._emit(self.continuous[path].sample(now))

    def _integrate(self, t: float, dt: float):
        for path in sorted(self.continuous):
            self.continuous[path].integrate(t, dt, self.config.integrator)

    # -- main loop ----------------------------------------------------------

    def run(self) -> SimulationTrace:
        cfg = self.config
        end = cfg.end_time
        has_cont = bool(self.continuous)
        t = 0.0

        for path in sorted(self.discrete):
            rt = self.discrete[path]
            events = self.programs[path].enter(rt, rt.current_state, 0.0)
            self._emit(events)
        for path in sorted(self.continuous):
            self.continuous[path].refresh(0.0)
        if has_cont:
            self._sample_continuous(0.0)
        self._settle(0.0)

        k = 0  # completed grid steps
        while True:
            t_int = min((rt.next_internal for rt in self.discrete.values()), default=math.inf)
            t_grid = (k + 1) * cfg.continuous_step if has_cont else math.inf
            t_next = min(t_int, t_grid)
            if t_next == math.inf or t_next > end:
                break
            if has_cont and t_next > t:
                self._integrate(t, t_next - t)
            t = t_next
            if t == t_grid:
                k += 1
            if has_cont:
                self._sample_continuous(t)
            self._settle(t)
            if t == end:
                break

        if has_cont and t < end:
            self._integrate(t, end - t)
            t = end
            self._sample_continuous(t)
            self._settle(t)

        final = {}
        for path in sorted(self.discrete):
            env = dict(self.discrete[path].value_env)
            env["@state"] = self.discrete[path].current_state
            final[path] = env
        for path in sorted(self.continuous):
            final[path] = dict(self.continuous[path].env)
        return SimulationTrace(self.trace, end, final)


def simulate(linked: LinkedModel, config: SimulationConfig) -> SimulationTrace:
    """Deterministic trace of all port events up to config.end_time."""
    return Simulator(linked, config).run()
