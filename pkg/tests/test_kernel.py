"""Kernel semantics: transitions, hybrid stepping, traces, determinism."""

import math

import pytest

from xlang.diagnostics import RuntimeFault
from xlang.kernel import (
    Integrator,
    SimulationConfig,
    Simulator,
    UnknownTransformTarget,
    make_atomic_runtime,
    simulate,
    step_atomic,
)
from xlang.linker import link_model_set
from xlang.parser import parse_unit, parse_units
from xlang.trace import PortEvent, PortSetMismatch, SimulationTrace, compare_traces

OSCILLATOR = """discrete Osc
value:
  Real n = 0;
port:
  output Real tick = 0;
state:
  initial state A
    when entry() then
      statehold(1);
    end;
    when true transform B then
      n = n + 1;
      tick = n;
    end;
  end;
  state B
    when entry() then
      statehold(1);
    end;
    when true transform A then
    end;
  end;
end;
"""

AUTOPILOT_LIKE = """discrete Pilot
value:
  Real level = 0;
port:
  input Real cmd_in = 0;
  output Real draw_out = 0;
state:
  initial state Operate
    when entry() then
      statehold(5);
    end;
    when cmd_in > 2 transform Operate then
      level = cmd_in;
      draw_out = level;
    end;
  end;
end;
"""


def _linked(*sources):
    units = []
    for src in sources:
        units.extend(parse_units(src))
    return link_model_set(units).raise_on_errors()


def _wrap(unit_src, name, instance):
    top = f"couple Top\n  import {name};\npart:\n  {name} {instance};\nend;\n"
    return _linked(unit_src, top)


def test_two_state_oscillator_fires_every_unit():
    trace = simulate(_wrap(OSCILLATOR, "Osc", "osc"), SimulationConfig(end_time=6.0))
    # internal transitions at t=1,2,3,...; the A->B leg emits the count
    assert [e.time for e in trace.events] == [1.0, 3.0, 5.0]
    assert [e.value for e in trace.events] == [1.0, 2.0, 3.0]
    assert trace.final_values["osc"]["@state"] == "A"


def test_statehold_expiry_fires_internal_transition():
    linked = _wrap(AUTOPILOT_LIKE, "Pilot", "pilot")
    sim = Simulator(linked, SimulationConfig(end_time=20.0))
    trace = sim.run()
    rt = sim.discrete["pilot"]
    # statehold(5): internal transitions at 5, 10, 15, 20; no matching
    # transform, so the implicit self-loop keeps restarting the clock
    assert rt.time_of_last_event == 20.0
    assert trace.events == []


def test_step_atomic_external_transition_with_matching_condition():
    linked = _wrap(AUTOPILOT_LIKE, "Pilot", "pilot")
    sim = Simulator(linked, SimulationConfig(end_time=0.0))
    sim.run()
    rt = sim.discrete["pilot"]
    out, events = step_atomic(rt, [PortEvent(2.0, "pilot", "cmd_in", 3.0)], 2.0)
    assert out.current_state == "Operate"
    assert out.time_of_last_event == 2.0  # clock restarted by the self-target
    assert [(e.port, e.value) for e in events] == [("draw_out", 3.0)]
    assert rt.value_env["level"] == 0.0  # functional: input runtime untouched


def test_step_atomic_no_matching_condition_absorbs_input():
    linked = _wrap(AUTOPILOT_LIKE, "Pilot", "pilot")
    sim = Simulator(linked, SimulationConfig(end_time=0.0))
    sim.run()
    rt = sim.discrete["pilot"]
    before = (rt.current_state, rt.time_of_last_event, rt.time_advance)
    out, events = step_atomic(rt, [PortEvent(1.0, "pilot", "cmd_in", 1.0)], 1.0)
    assert events == []
    assert (out.current_state, out.time_of_last_event, out.time_advance) == before
    assert out.value_env["cmd_in"] == 1.0  # the input itself is latched


def test_unknown_transform_target_signals_kernel_bug():
    unit = parse_unit(AUTOPILOT_LIKE)
    rt = make_atomic_runtime(unit, "pilot")
    rt = rt.copy()
    rt.current_state = "Operate"
    object.__setattr__(unit.states.states[0].transforms[0], "target", "Ghost")
    with pytest.raises(UnknownTransformTarget):
        step_atomic(rt, [PortEvent(0.0, "pilot", "cmd_in", 9.0)], 0.0)


def test_constant_source_samples_every_step():
    battery = "continuous Battery\nvalue:\n  Real v = 28.5;\nport:\n  output Real power_out = 0;\nequation:\n  power_out = v;\nend;\n"
    trace = simulate(_wrap(battery, "Battery", "battery"), SimulationConfig(end_time=10.0))
    events = [e for e in trace.events if e.part_path == "battery"]
    assert [e.time for e in events] == [float(t) for t in range(11)]
    assert all(e.value == 28.5 for e in events)


def test_euler_exact_for_constant_derivative():
    ramp = "continuous Ramp\nvalue:\n  Real x = 0;\nport:\n  output Real x_out = 0;\nequation:\n  der(x) = 1;\n  x_out = x;\nend;\n"
    trace = simulate(
        _wrap(ramp, "Ramp", "ramp"),
        SimulationConfig(end_time=1.0, continuous_step=0.1),
    )
    assert trace.final_values["ramp"]["x"] == 1.0  # exact, not approximately


def test_rk4_beats_euler_on_exponential():
    grow = "continuous Grow\nvalue:\n  Real x = 1;\nport:\n  output Real x_out = 1;\nequation:\n  der(x) = x;\n  x_out = x;\nend;\n"
    exact = math.e
    results = {}
    for method in (Integrator.EULER, Integrator.RK4):
        trace = simulate(
            _wrap(grow, "Grow", "grow"),
            SimulationConfig(end_time=1.0, continuous_step=0.1, integrator=method),
        )
        results[method] = abs(trace.final_values["grow"]["x"] - exact)
    assert results[Integrator.RK4] < results[Integrator.EULER]


def test_determinism_across_runs():
    def run():
        linked = _wrap(OSCILLATOR, "Osc", "osc")
        return simulate(linked, SimulationConfig(end_time=9.0)).to_tsv()

    assert run() == run()


def test_trace_times_monotone_and_bounded(aircraft_reference):
    trace = aircraft_reference.trace
    times = [e.time for e in trace.events]
    assert times == sorted(times)
    assert all(t <= trace.end_time for t in times)


def test_routing_conservation(aircraft_reference):
    linked = aircraft_reference.linked
    sim = Simulator(linked, aircraft_reference.sim_config)
    sim.run()
    routes = sim.routes
    emitted = {}
    for event in sim.trace:
        if event.key in routes:
            emitted[event.key] = emitted.get(event.key, 0) + 1
    # every emission on a connected output is delivered exactly once per destination
    expected = sum(count * len(routes[key]) for key, count in emitted.items())
    assert len(sim.deliveries) == expected


def test_runtime_fault_on_division_by_zero():
    bad = (
        "continuous Bad\nvalue:\n  Real x = 1;\nport:\n  output Real y = 0;\n"
        "equation:\n  y = x / (x - 1);\nend;\n"
    )
    with pytest.raises(RuntimeFault) as err:
        simulate(_wrap(bad, "Bad", "bad"), SimulationConfig(end_time=1.0))
    assert err.value.part_path == "bad"


def test_cascade_guard_reports_nonconvergence():
    ping = (
        "discrete Ping\nport:\n  input Real a_in = 0;\n  output Real a_out = 0;\n"
        "state:\n  initial state S\n    when entry() then\n      statehold(inf);\n      a_out = 1;\n    end;\n"
        "    when a_in > 0 transform S then\n      a_out = a_in;\n    end;\n  end;\nend;\n"
    )
    pong = ping.replace("Ping", "Pong")
    top = (
        "couple Top\n  import Ping;\n  import Pong;\npart:\n  Ping ping;\n  Pong pong;\n"
        "connection:\n  connect(ping.a_out, pong.a_in);\n  connect(pong.a_out, ping.a_in);\nend;\n"
    )
    with pytest.raises(RuntimeFault, match="settle"):
        simulate(_linked(ping, pong, top), SimulationConfig(end_time=1.0))


def test_compare_traces_identical_and_tolerance():
    t1 = SimulationTrace([PortEvent(0.0, "a", "p", 28.5)])
    assert compare_traces(t1, t1, tol=0.0).all_match
    t2 = SimulationTrace([PortEvent(0.0, "a", "p", 28.5000004)])
    assert compare_traces(t2, t1, tol=1e-6).all_match
    assert not compare_traces(t2, t1, tol=1e-9).all_match


def test_compare_traces_event_count_isolated_per_port():
    ref = SimulationTrace([PortEvent(0.0, "a", "p", 1.0), PortEvent(0.0, "a", "q", 1.0), PortEvent(1.0, "a", "q", 2.0)])
    got = SimulationTrace([PortEvent(0.0, "a", "p", 1.0), PortEvent(0.0, "a", "q", 1.0)])
    diff = compare_traces(got, ref, tol=0.0)
    assert diff.ports[("a", "p")].matched
    assert not diff.ports[("a", "q")].matched
    assert diff.mismatched() == [("a", "q")]


def test_compare_traces_port_set_mismatch():
    with pytest.raises(PortSetMismatch):
        compare_traces(
            SimulationTrace([PortEvent(0.0, "a", "p", 1.0)]),
            SimulationTrace([PortEvent(0.0, "b", "p", 1.0)]),
        )


def test_trace_exports():
    trace = SimulationTrace([PortEvent(1.0, "a", "p", 2.5), PortEvent(2.0, "a", "q", True)])
    assert trace.to_tsv() == "1.0\ta\tp\t2.5\n2.0\ta\tq\ttrue\n"
    assert trace.to_json_dict() == {
        "events": [
            {"time": 1.0, "part": "a", "port": "p", "value": 2.5},
            {"time": 2.0, "part": "a", "port": "q", "value": True},
        ]
    }
