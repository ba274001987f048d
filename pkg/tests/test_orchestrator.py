"""Generation orchestration: extraction, repair loop, connection and
function inference."""

import pytest

from xlang.backends import CompletionLimits, ScriptedBackend
from xlang.diagnostics import BackendFailure
from xlang.docpipe import ComponentNode, SystemComposition
from xlang.model import PartDecl, PortDirection, UnitKind
from xlang.orchestrator import (
    Exhausted,
    UnparseableOutput,
    extract_code,
    fill_hole,
    generate_missing_functions,
    infer_connections,
)
from xlang.parser import parse_unit
from xlang.prompts import Label
from xlang.templates import Hole, PortSpec, make_atomic_skeleton

LIMITS = CompletionLimits()

GOOD_STATE = """value:
  Real x = 0;
state:
  initial state Idle
    when entry() then
      statehold(inf);
    end;
    when cmd_in > 1 transform Idle then
      x = cmd_in;
      draw_out = x;
    end;
  end;
"""


class AlwaysText:
    name = "always"

    def __init__(self, text):
        self.text = text
        self.calls = 0

    def complete(self, bundle, limits):
        self.calls += 1
        return self.text


def _skeleton():
    ports = [
        PortSpec(PortDirection.INPUT, "Real", "cmd_in"),
        PortSpec(PortDirection.OUTPUT, "Real", "draw_out"),
    ]
    return make_atomic_skeleton(PartDecl("AutoPilot", "auto_pilot"), ports, UnitKind.DISCRETE)


# -- code extraction -------------------------------------------------------


def test_extract_prefers_fenced_block():
    raw = "Sure! Here is the code:\n```\nvalue:\n  Real x = 0;\n```\nHope this helps."
    assert extract_code(raw) == "value:\n  Real x = 0;"


def test_extract_scans_from_section_keyword():
    raw = "The state machine below keeps one state.\nstate:\n  initial state S\n  end;\n"
    assert extract_code(raw).startswith("state:")


def test_extract_trims_surplus_unit_end():
    raw = "value:\n  Real x = 0;\nstate:\n  initial state S\n    when entry() then\n      statehold(1);\n    end;\n  end;\nend;\n"
    trimmed = extract_code(raw)
    assert trimmed.rstrip().endswith("end;")
    # one state block, one when block -> two end;s expected, third trimmed
    assert trimmed.count("end;") == 2


def test_extract_whole_unit_cuts_trailing_prose():
    raw = "function f\nparameter:\n  Real x;\nbody:\n  return x;\nend;\nLet me know if you need more!"
    out = extract_code(raw, expect_unit=True)
    assert out.endswith("end;")
    assert "Let me know" not in out
    assert parse_unit(out).name == "f"


# -- fill_hole ----------------------------------------------------------------


def test_fill_hole_first_attempt_success():
    backend = AlwaysText(GOOD_STATE)
    unit, report = fill_hole(_skeleton(), Hole.STATE, backend, 3, limits=LIMITS)
    assert unit.states is not None and unit.values
    assert backend.calls == 1
    assert len(report.attempts) == 1
    assert report.attempts[0].note_added is None
    assert report.final is unit


def test_fill_hole_extracts_code_from_prose():
    backend = AlwaysText("Sure! Here you go:\n```x\n" + GOOD_STATE + "```\nEnjoy.")
    unit, report = fill_hole(_skeleton(), Hole.STATE, backend, 2, limits=LIMITS)
    assert unit.states.initial_state == "Idle"


def test_fill_hole_budget_law():
    backend = AlwaysText("state:\n  initial state S\n    when broken ( transform S then\n    end;\n  end;")
    with pytest.raises(Exhausted) as err:
        fill_hole(_skeleton(), Hole.STATE, backend, 2, limits=LIMITS)
    assert len(err.value.report.attempts) == 2
    assert backend.calls == 2


def test_fill_hole_notes_grow_monotonically():
    texts = iter(
        [
            "no code at all, sorry",
            "state:\n  initial state S\n    when ghost_var > 1 transform S then\n    end;\n  end;",
            GOOD_STATE,
        ]
    )
    seen_bundles = []

    class Seq:
        name = "seq"

        def complete(self, bundle, limits):
            seen_bundles.append(bundle)
            return next(texts)

    unit, report = fill_hole(_skeleton(), Hole.STATE, Seq(), 3, limits=LIMITS)
    assert unit is not None
    assert len(report.attempts) == 3
    # each retry's prompt strictly extends the prior one by one note
    notes = [b.message(Label.NOTE) for b in seen_bundles]
    assert notes[0] is None
    assert notes[1] is not None
    assert notes[2].content.startswith(notes[1].content)
    assert len(notes[2].content) > len(notes[1].content)
    # classified note kinds: missing section, then unknown identifier
    assert "section" in report.attempts[0].note_added
    assert "not declared" in report.attempts[1].note_added


def test_fill_hole_tolerates_unresolved_calls():
    text = GOOD_STATE.replace("x = cmd_in;", "x = helper(cmd_in);")
    unit, report = fill_hole(_skeleton(), Hole.STATE, AlwaysText(text), 2, limits=LIMITS)
    assert unit is not None  # helper() is generated later, not a repair case


# -- infer_connections -----------------------------------------------------


def _composition():
    root = ComponentNode("plant", [ComponentNode("pump"), ComponentNode("tank")])
    return SystemComposition(root)


def test_infer_connections_parses_lines():
    backend = AlwaysText("connect(pump.flow_out, tank.inflow);\nconnect(tank.level_out, pump.level_in);\n")
    connections, diags = infer_connections(["The pump feeds the tank."], _composition(), backend)
    assert [(c.from_part, c.from_port, c.to_part, c.to_port) for c in connections] == [
        ("pump", "flow_out", "tank", "inflow"),
        ("tank", "level_out", "pump", "level_in"),
    ]


def test_infer_connections_accepts_class_spellings():
    backend = AlwaysText("connect(Pump.flow_out, Tank.inflow);")
    connections, _ = infer_connections(["x feeds y."], _composition(), backend)
    assert connections[0].from_part == "pump"  # canonicalized to instance names


def test_infer_connections_drops_hallucinated_parts():
    backend = AlwaysText("connect(Ghost.p, tank.q);\nconnect(pump.a, tank.b);")
    connections, diags = infer_connections(["pump feeds tank."], _composition(), backend)
    assert len(connections) == 1
    assert any(d.code == "orchestrator/unknown-part-dropped" for d in diags)


def test_infer_connections_empty_corpus_skips_backend():
    class Exploding:
        name = "exploding"

        def complete(self, bundle, limits):
            raise AssertionError("must not be called")

    connections, diags = infer_connections([], _composition(), Exploding())
    assert connections == []
    assert any(d.code == "orchestrator/empty-connection-corpus" for d in diags)


def test_infer_connections_unparseable_after_budget():
    backend = AlwaysText("I cannot answer that in the requested format.")
    with pytest.raises(UnparseableOutput):
        infer_connections(["pump feeds tank."], _composition(), backend, retry_budget=2)
    assert backend.calls == 2


# -- generate_missing_functions ---------------------------------------------


CLAMP_TEXT = "function clamp\nparameter:\n  Real x;\n  Real lo;\n  Real hi;\nbody:\n  return min(max(x, lo), hi);\nend;\n"


def _unit_calling(*calls):
    actions = "\n".join(f"      y = {call};" for call in calls)
    return parse_unit(
        "discrete D\nvalue:\n  Real y = 0;\nstate:\n  initial state S\n"
        f"    when entry() then\n      statehold(1);\n{actions}\n    end;\n  end;\nend;\n"
    )


def test_generate_missing_function():
    def is_clamp(bundle):
        task = bundle.message(Label.TASK)
        return task is not None and "named `clamp`" in task.content

    backend = ScriptedBackend([(is_clamp, CLAMP_TEXT)])
    unit = _unit_calling("clamp(y, 0, 1)")
    generated, diags = generate_missing_functions(unit, {}, backend, limits=LIMITS)
    assert [u.name for u in generated] == ["clamp"]
    assert generated[0].kind is UnitKind.FUNCTION


def test_generate_missing_functions_builtins_only():
    unit = _unit_calling("min(y, 1)", "abs(y)")
    generated, diags = generate_missing_functions(unit, {}, backend=None, limits=LIMITS)
    assert generated == []


def test_generate_two_symbols_two_prompts():
    seen = []

    class PerSymbol:
        name = "per-symbol"

        def complete(self, bundle, limits):
            task = bundle.message(Label.TASK).content
            for symbol in ("fa", "fb"):
                if f"named `{symbol}`" in task:
                    seen.append(symbol)
                    return f"function {symbol}\nparameter:\n  Real x;\nbody:\n  return x;\nend;\n"
            raise BackendFailure("unexpected prompt")

    unit = _unit_calling("fa(y)", "fb(y)")
    generated, _ = generate_missing_functions(unit, {}, PerSymbol(), limits=LIMITS)
    assert sorted(u.name for u in generated) == ["fa", "fb"]
    assert seen == ["fa", "fb"]  # sorted symbol order


def test_generated_function_depth_one_flagged():
    def responder(bundle):
        return True

    nested = "function outer\nparameter:\n  Real x;\nbody:\n  return inner(x);\nend;\n"
    backend = ScriptedBackend([(responder, nested)])
    unit = _unit_calling("outer(y)")
    generated, diags = generate_missing_functions(unit, {}, backend, limits=LIMITS)
    assert [u.name for u in generated] == ["outer"]
    assert any(d.code == "orchestrator/nested-missing-function" for d in diags)
