"""Scoring machinery: every worked example, the properties, and the
consistency extraction."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xlang.evaluation import (
    ComponentWeights,
    ConsistencyTally,
    DegenerateMatrix,
    ErrorCounts,
    KindMismatch,
    NoModels,
    PenaltyConfig,
    WeightMismatch,
    atomic_similarity,
    attenuation,
    behavior_similarity,
    consistency_check,
    couple_similarity,
    element_similarity,
    entropy_weights,
    evaluate_model_set,
    match_f1,
    score_couple,
    simulation_correctness,
)
from xlang.linker import link_model_set
from xlang.model import UnitKind
from xlang.parser import parse_unit, parse_units

CFG = PenaltyConfig()


# -- score_couple ---------------------------------------------------------------


def test_score_couple_all_perfect():
    assert score_couple(1.0, [0.5, 0.5], [1.0, 1.0]) == 1.0


def test_score_couple_hand_arithmetic():
    assert score_couple(0.9, [0.4, 0.6], [1.0, 0.5]) == pytest.approx(0.63, abs=1e-9)


def test_score_couple_absorbing_zero():
    assert score_couple(0.0, [0.4, 0.6], [1.0, 1.0]) == 0.0


def test_score_couple_weight_mismatch():
    with pytest.raises(WeightMismatch):
        score_couple(1.0, [1.0], [1.0, 1.0])
    with pytest.raises(WeightMismatch):
        score_couple(1.0, [0.4, 0.4], [1.0, 1.0])


# -- simulation_correctness -------------------------------------------------------


def test_simulation_correctness_branches():
    assert simulation_correctness(True, 0.1, 0.8) == 1.0
    assert simulation_correctness(False, 0.5, 0.8) == pytest.approx(0.4, abs=1e-12)
    assert simulation_correctness(False, 0.0, 0.8) == 0.0


# -- couple/atomic similarity ----------------------------------------------------


def test_couple_similarity_perfect():
    assert couple_similarity(1.0, 1.0, 1.0, 1.0, (1 / 3, 1 / 3, 1 / 3)) == pytest.approx(1.0, abs=1e-12)


def test_couple_similarity_hand_arithmetic():
    got = couple_similarity(1.0, 0.8, 1.0, 0.5, (1 / 3, 1 / 3, 1 / 3))
    assert got == pytest.approx((1 + 0.8 + 0.5) / 3, abs=1e-9)


def test_couple_similarity_zero_weight_decouples():
    a = couple_similarity(1.0, 0.2, 1.0, 0.5, (0.5, 0.0, 0.5))
    b = couple_similarity(1.0, 0.9, 1.0, 0.5, (0.5, 0.0, 0.5))
    assert a == b


def test_atomic_similarity_hand_arithmetic():
    weights = ComponentWeights(atomic=(0.2, 0.3, 0.5, 0.0))
    parts = {"header": 1.0, "definition": 0.45, "state": 0.25149}
    got = atomic_similarity(parts, UnitKind.DISCRETE, weights)
    assert got == pytest.approx(0.2 + 0.3 * 0.45 + 0.5 * 0.25149, abs=1e-9)


def test_atomic_similarity_continuous_perfect():
    weights = ComponentWeights()
    parts = {"header": 1.0, "definition": 1.0, "equation": 1.0}
    assert atomic_similarity(parts, UnitKind.CONTINUOUS, weights) == pytest.approx(1.0, abs=1e-12)


def test_atomic_similarity_kind_mismatch():
    with pytest.raises(KindMismatch):
        atomic_similarity({"header": 1, "definition": 1, "equation": 0.5}, UnitKind.DISCRETE, ComponentWeights())


# -- match_f1 --------------------------------------------------------------------


def test_match_f1_identical():
    six = {f"part{i}" for i in range(6)}
    assert match_f1(six, six) == 1.0


def test_match_f1_five_of_six_plus_spurious():
    reference = {f"p{i}" for i in range(6)}
    generated = {f"p{i}" for i in range(5)} | {"ghost"}
    assert match_f1(generated, reference) == pytest.approx(5 / 6, abs=1e-9)


def test_match_f1_disjoint_and_empty():
    assert match_f1({"a"}, {"b"}) == 0.0
    assert match_f1(set(), set()) == 1.0
    assert match_f1(set(), {"a"}) == 0.0
    assert match_f1({"a"}, set()) == 0.0


def test_match_f1_normalizes_names():
    assert match_f1({"AutoPilot"}, {"auto_pilot"}) == 1.0
    assert match_f1({("a_b", "PortOne")}, {("AB", "port_one")}) == 1.0


# -- element_similarity ------------------------------------------------------------


def test_element_similarity_branches():
    assert element_similarity(ConsistencyTally(3, 0), 0.6) == 1.0
    assert element_similarity(ConsistencyTally(3, 1), 0.6) == pytest.approx(0.45, abs=1e-12)
    assert element_similarity(ConsistencyTally(0, 4), 0.6) == 0.0


def test_element_similarity_explicit_flag():
    assert element_similarity(ConsistencyTally(3, 1), 0.6, consistent=True) == 1.0
    with pytest.raises(ValueError):
        element_similarity(ConsistencyTally(0, 0), 0.6, consistent=False)


# -- attenuation / behavior_similarity ---------------------------------------------


def test_attenuation_identity_length():
    assert attenuation(0.2, 0.1, 1, 1) == (0.2, 0.1)


def test_attenuation_spot_values():
    alpha4, _ = attenuation(0.2, 0.1, 1, 4)
    _, beta2 = attenuation(0.2, 0.1, 1, 2)
    assert alpha4 == pytest.approx(0.2**0.25, abs=1e-9)
    assert beta2 == pytest.approx(0.1**0.5, abs=1e-9)
    assert alpha4 == pytest.approx(0.66874, abs=1e-5)
    assert beta2 == pytest.approx(0.31623, abs=1e-5)


def test_attenuation_preserves_order():
    alpha, beta = attenuation(0.2, 0.1, 1, 7)
    assert beta < alpha


def test_behavior_similarity_error_free():
    assert behavior_similarity(ErrorCounts(0, 0, 3), CFG) == 1.0


def test_behavior_similarity_hand_value():
    got = behavior_similarity(ErrorCounts(2, 1, 4), CFG)
    alpha = 0.2**0.25
    beta = 0.1**0.25
    assert got == pytest.approx(alpha**2 * beta, abs=1e-9)
    assert got == pytest.approx(0.66874**2 * 0.56234, abs=1e-4)


def test_behavior_similarity_scaling_invariance():
    base = behavior_similarity(ErrorCounts(2, 1, 4), CFG)
    doubled = behavior_similarity(ErrorCounts(4, 2, 8), CFG)
    assert doubled == pytest.approx(base, abs=1e-12)


# -- entropy weights -----------------------------------------------------------------


def test_entropy_constant_column_zero_weight():
    weights = entropy_weights([[1.0, 1.0], [1.0, 0.5], [1.0, 0.25]])
    assert weights[0] == 0.0
    assert weights[1] == pytest.approx(1.0, abs=1e-12)


def test_entropy_weights_example_value():
    # column 2 of [[1,1],[1,0.5],[1,0.25]]: e ~ 0.8700
    matrix = np.array([[1.0, 1.0], [1.0, 0.5], [1.0, 0.25]])
    p = matrix[:, 1] / matrix[:, 1].sum()
    entropy = -(p * np.log(p)).sum() / math.log(3)
    assert entropy == pytest.approx(0.8700, abs=1e-4)


def test_entropy_all_columns_identical_uniform_fallback():
    diags = []
    weights = entropy_weights([[2.0, 3.0], [2.0, 3.0]], diags)
    assert weights == [0.5, 0.5]
    assert any(d.code == "evaluation/ewm-degenerate" for d in diags)


def test_entropy_degenerate_matrix():
    with pytest.raises(DegenerateMatrix):
        entropy_weights([[1.0, 2.0]])


# -- consistency_check ----------------------------------------------------------------


def test_consistency_fixture_all_consistent(aircraft_reference):
    tallies = consistency_check(aircraft_reference.linked)
    for name, unit_tally in tallies.items():
        assert unit_tally.header.inconsistent == 0, (name, unit_tally.header.details)
        if unit_tally.port is not None:
            assert unit_tally.port.inconsistent == 0
        if unit_tally.definition is not None:
            assert unit_tally.definition.inconsistent == 0, (name, unit_tally.definition.details)


def test_consistency_renamed_subsystem(reference_files):
    units = []
    for name, text in reference_files:
        if name == "Radar.x":
            text = text.replace("discrete Radar", "discrete RadarUnit")
        units.extend(parse_units(text))
    linked = link_model_set(units, top="AircraftElectricalSystem")
    tallies = consistency_check(linked)
    assert tallies["RadarUnit"].header.inconsistent == 1


def test_consistency_missing_function(reference_files):
    units = []
    for name, text in reference_files:
        if name == "clamp.x":
            continue
        units.extend(parse_units(text))
    linked = link_model_set(units)
    tallies = consistency_check(linked)
    assert any("clamp" in d for d in tallies["AutoPilot"].definition.details)
    assert tallies["AutoPilot"].definition.inconsistent >= 1


# -- evaluate_model_set -----------------------------------------------------------------


def test_evaluate_reference_against_itself(reference_files, aircraft_reference):
    report = evaluate_model_set(reference_files, aircraft_reference)
    assert report.final == 1.0


def test_evaluate_empty_set(aircraft_reference):
    with pytest.raises(NoModels):
        evaluate_model_set([], aircraft_reference)


def test_report_json_shape(reference_files, aircraft_reference):
    report = evaluate_model_set(reference_files, aircraft_reference)
    tree = report.tree.to_dict()
    assert set(tree) >= {"name", "A", "P", "components", "weights", "children", "final"}
    assert set(tree["components"]) == {"header", "attribute", "connection"}
    for child in tree["children"]:
        assert set(child["components"]) in (
            {"header", "definition", "state"},
            {"header", "definition", "equation"},
        )
        assert child["final"] is None  # Eq. 5 scores live on couple nodes only


def test_evaluate_flags_missing_annotations(reference_files, aircraft_reference):
    report = evaluate_model_set(reference_files, aircraft_reference)
    autopilot = next(n for n in report.tree.walk() if n.name == "AutoPilot")
    assert "n-assumed-zero" in autopilot.flags


def test_evaluate_honors_annotations(reference_files, aircraft_reference):
    report = evaluate_model_set(
        reference_files, aircraft_reference, annotations={"AutoPilot": {"n": 1}}
    )
    autopilot = next(n for n in report.tree.walk() if n.name == "AutoPilot")
    assert autopilot.components["state"] == pytest.approx(0.1, abs=1e-12)
    assert "n-assumed-zero" not in autopilot.flags


def test_annotations_may_override_syntax_count(reference_files, aircraft_reference):
    report = evaluate_model_set(
        reference_files, aircraft_reference, annotations={"AutoPilot": {"m": 2, "n": 0}}
    )
    autopilot = next(n for n in report.tree.walk() if n.name == "AutoPilot")
    assert autopilot.components["state"] == pytest.approx(0.2**2, abs=1e-12)


# -- configuration validation -------------------------------------------------------------


def test_penalty_config_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(beta_c=0.3, alpha_c=0.2)  # beta must stay below alpha
    with pytest.raises(ValueError):
        PenaltyConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        PenaltyConfig(len_c=0)


def test_component_weights_validation():
    with pytest.raises(WeightMismatch):
        ComponentWeights(couple=(0.5, 0.5, 0.5))
    with pytest.raises(WeightMismatch):
        ComponentWeights(atomic=(0.5, 0.5, 0.5, -0.5))


def test_error_counts_validation():
    with pytest.raises(ValueError):
        ErrorCounts(-1, 0, 1)
    with pytest.raises(ValueError):
        ErrorCounts(0, 0, 0)


# -- property tests ---------------------------------------------------------------------

tallies = st.tuples(st.integers(0, 8), st.integers(0, 8)).filter(lambda t: sum(t) >= 1)
counts = st.tuples(st.integers(0, 6), st.integers(0, 6), st.integers(1, 10))
unit_interval = st.floats(0.0, 1.0, allow_nan=False)


@given(tallies, st.floats(0.01, 1.0))
@settings(max_examples=150, deadline=None)
def test_element_similarity_in_range(tally, eps):
    value = element_similarity(ConsistencyTally(*tally), eps)
    assert 0.0 <= value <= 1.0


@given(counts)
@settings(max_examples=150, deadline=None)
def test_behavior_similarity_in_range(count):
    value = behavior_similarity(ErrorCounts(*count), CFG)
    assert 0.0 <= value <= 1.0


@given(counts)
@settings(max_examples=150, deadline=None)
def test_behavior_similarity_monotone_in_errors(count):
    m, n, length = count
    base = behavior_similarity(ErrorCounts(m, n, length), CFG)
    assert behavior_similarity(ErrorCounts(m + 1, n, length), CFG) <= base
    assert behavior_similarity(ErrorCounts(m, n + 1, length), CFG) <= base


@given(tallies, st.floats(0.01, 1.0))
@settings(max_examples=150, deadline=None)
def test_element_similarity_monotone_in_inconsistency(tally, eps):
    ce, ie = tally
    base = element_similarity(ConsistencyTally(ce, ie), eps)
    worse = element_similarity(ConsistencyTally(ce, ie + 1), eps)
    assert worse <= base


@given(st.lists(unit_interval, min_size=1, max_size=6), unit_interval, st.integers(0, 5))
@settings(max_examples=150, deadline=None)
def test_score_monotone_in_child_correctness(child_a, parent_a, bump_index):
    weights = [1.0 / len(child_a)] * len(child_a)
    base = score_couple(parent_a, weights, child_a)
    improved = list(child_a)
    idx = bump_index % len(child_a)
    improved[idx] = min(1.0, improved[idx] + 0.25)
    assert score_couple(parent_a, weights, improved) >= base - 1e-12


@given(unit_interval, st.floats(0.01, 1.0))
@settings(max_examples=100, deadline=None)
def test_eq6_gap(p, epsilon):
    incorrect = simulation_correctness(False, p, epsilon)
    assert incorrect <= epsilon < 1.0 or epsilon == 1.0
    assert incorrect < 1.0 or epsilon == 1.0
