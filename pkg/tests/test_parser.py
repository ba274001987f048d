"""Parser behavior: grammar coverage, faults, and recovery."""

import pytest

from xlang.diagnostics import MissingEnd, ParseError
from xlang.model import UnitKind
from xlang.parser import parse_unit, parse_unit_lenient, parse_units, parse_units_lenient

# the full couple template instantiated with one part and one connection
COUPLE_TEMPLATE_INSTANCE = """couple PowerTrain
  import Motor;
part:
  Motor motor;
parameter:
  Real rated_power = 10;
port:
  Real supply_in = 0;
value:
  Real uptime = 0;
connection:
  connect(supply_in, motor.drive_in);
end;
"""


def test_couple_template_instance_parses():
    unit = parse_unit(COUPLE_TEMPLATE_INSTANCE)
    assert unit.kind is UnitKind.COUPLE
    assert len(unit.parts) == 1
    assert len(unit.connections) == 1
    assert unit.connections[0].from_part == ""  # own port endpoint
    assert unit.connections[0].to_part == "motor"


def test_minimal_continuous_unit():
    unit = parse_unit("continuous C\nequation:\nend;\n")
    assert unit.kind is UnitKind.CONTINUOUS
    assert unit.equations == ()


def test_couple_with_state_section_rejected():
    with pytest.raises(ParseError) as err:
        parse_unit("couple C\nstate:\nend;\n")
    assert err.value.diagnostic.code == "parse/section-not-permitted"


def test_sections_accepted_in_any_order():
    a = parse_unit("discrete D\nstate:\n  initial state S\n  end;\nvalue:\n  Real x = 1;\nport:\n  output Real y = 0;\nend;\n")
    b = parse_unit("discrete D\nvalue:\n  Real x = 1;\nport:\n  output Real y = 0;\nstate:\n  initial state S\n  end;\nend;\n")
    assert a == b


def test_unknown_section_keyword_rejected():
    with pytest.raises(ParseError) as err:
        parse_unit("discrete D\nstates:\nend;\n")
    assert err.value.diagnostic.code == "parse/unknown-section"


def test_missing_end_is_its_own_error():
    with pytest.raises(MissingEnd):
        parse_unit("discrete D\nvalue:\n  Real x = 0;\n")


def test_error_span_points_inside_input():
    source = "discrete D\nvalue:\n  Real 42;\nend;\n"
    with pytest.raises(ParseError) as err:
        parse_unit(source)
    span = err.value.diagnostic.span
    assert span is not None
    assert 1 <= span.start_line <= source.count("\n") + 1


def test_comments_are_stripped():
    unit = parse_unit("// header comment\ndiscrete D // trailing\nvalue:\n  Real x = 1; // note\nend;\n")
    assert unit.values[0].name == "x"


def test_duplicate_port_rejected():
    with pytest.raises(ParseError) as err:
        parse_unit("discrete D\nport:\n  input Real p = 0;\n  output Real p = 0;\nend;\n")
    assert err.value.diagnostic.code == "unit/duplicate-port"


def test_part_class_must_be_imported():
    with pytest.raises(ParseError) as err:
        parse_unit("couple C\npart:\n  Ghost g;\nend;\n")
    assert err.value.diagnostic.code == "unit/unimported-part"


def test_atomic_port_requires_direction():
    with pytest.raises(ParseError) as err:
        parse_unit("discrete D\nport:\n  Real p = 0;\nend;\n")
    assert err.value.diagnostic.code == "unit/port-direction-required"


def test_transform_target_must_exist():
    src = (
        "discrete D\nstate:\n  initial state A\n"
        "    when true transform Missing then\n    end;\n  end;\nend;\n"
    )
    with pytest.raises(ParseError) as err:
        parse_unit(src)
    assert err.value.diagnostic.code == "unit/unknown-transform-target"


def test_negative_statehold_rejected():
    src = "discrete D\nstate:\n  initial state A\n    when entry() then\n      statehold(-1);\n    end;\n  end;\nend;\n"
    with pytest.raises(ParseError) as err:
        parse_unit(src)
    assert err.value.diagnostic.code == "parse/negative-statehold"


def test_statehold_only_in_entry():
    src = (
        "discrete D\nstate:\n  initial state A\n"
        "    when true transform A then\n      statehold(1);\n    end;\n  end;\nend;\n"
    )
    with pytest.raises(ParseError) as err:
        parse_unit(src)
    assert err.value.diagnostic.code == "parse/statehold-outside-entry"


def test_bad_literal_for_type():
    with pytest.raises(ParseError) as err:
        parse_unit('discrete D\nvalue:\n  Int x = "nope";\nend;\n')
    assert err.value.diagnostic.code == "unit/bad-initial"


def test_multiple_units_per_file():
    units = parse_units("continuous A\nequation:\nend;\ncontinuous B\nequation:\nend;\n")
    assert [u.name for u in units] == ["A", "B"]


def test_parse_never_aborts_on_garbage():
    for source in ("", ";;;", "couple", "discrete 42 end;", "what ever\n"):
        results = parse_units_lenient(source)
        assert all(r.unit is None or r.diagnostics is not None for r in results)


def test_parser_totality_fuzz():
    # random slices and byte soup: every failure is a diagnostic, never a crash
    import random
    from pathlib import Path

    corpus = "".join(p.read_text() for p in (Path(__file__).parent / "fixtures" / "corpus").glob("*.x"))
    alphabet = list(set(corpus)) + list("{}[]#$%\x00")
    rng = random.Random(2024)
    for _ in range(400):
        if rng.random() < 0.5:
            soup = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 120)))
        else:
            start = rng.randrange(0, max(1, len(corpus) - 200))
            soup = corpus[start : start + rng.randint(10, 200)]
        parse_units_lenient(soup)  # must not raise


def test_lenient_single_fault_keeps_rest():
    src = (
        "discrete D\nport:\n  output Real y = 0;\nstate:\n"
        "  initial state S\n"
        "    when x > > 1 transform S then\n      y = 1;\n    end;\n"
        "    when true transform S then\n      y = 2;\n    end;\n"
        "  end;\nend;\n"
    )
    result = parse_unit_lenient(src)
    assert len(result.diagnostics) == 1
    assert result.diagnostics[0].code == "parse/bad-expression"
    assert result.diagnostics[0].data.get("section") == "state"
    assert result.unit is not None
    assert len(result.unit.states.states[0].transforms) == 1
    assert result.stats.states_seen == 1


def test_lenient_counts_equation_items():
    src = "continuous C\nvalue:\n  Real x = 0;\n  Real y = 0;\nequation:\n  der(x) = 1;\n  y = * 2;\n  y = x;\nend;\n"
    result = parse_unit_lenient(src)
    assert result.stats.equations_seen == 3
    assert len(result.unit.equations) == 2
    assert [d.data.get("section") for d in result.diagnostics] == ["equation"]


def test_expression_keywords_rejected_inside_expr():
    src = "discrete D\nstate:\n  initial state S\n    when entry() then\n      a = 1\n    end;\n  end;\nend;\n"
    with pytest.raises(ParseError):
        parse_unit(src)


def test_condition_must_be_pure_expression():
    src = (
        "discrete D\nvalue:\n  Real x = 0;\nstate:\n  initial state S\n"
        "    when x = 1 transform S then\n    end;\n  end;\nend;\n"
    )
    with pytest.raises(ParseError) as err:
        parse_unit(src)
    assert err.value.diagnostic.code == "parse/bad-expression"
