"""Mask-completion dataset: masking, splice-back, determinism, JSONL."""

import json

import pytest

from xlang.dataset import (
    MASK,
    DatasetError,
    build_mask_dataset,
    instruction_pool,
    mask_unit,
    to_jsonl,
    unmask,
)
from xlang.model import UnitKind
from xlang.parser import parse_unit
from xlang.printer import section_lines
from xlang.prompts import MASK_INSTRUCTION_CONTINUOUS, MASK_INSTRUCTION_DISCRETE


def _atomics(corpus_units):
    return [u for u in corpus_units if u.kind in (UnitKind.DISCRETE, UnitKind.CONTINUOUS) and (u.values or u.states or u.equations)]


def test_discrete_masks_value_and_state(reference_files):
    unit = parse_unit(dict(reference_files)["AutoPilot.x"])
    masked, hidden = mask_unit(unit)
    assert masked.count(MASK) == 2
    assert "value:" not in masked and "state:" not in masked
    assert "port:" in masked  # unmasked sections survive
    assert hidden.startswith("value:")
    assert "state:" in hidden


def test_continuous_output_contains_equation_section_exactly(reference_files):
    unit = parse_unit(dict(reference_files)["Thrust.x"])
    masked, hidden = mask_unit(unit)
    expected = "\n".join(section_lines(unit, "equation"))
    assert expected in hidden


def test_splice_back_reproduces_source(corpus_units):
    for unit in _atomics(corpus_units):
        masked, hidden = mask_unit(unit)
        assert parse_unit(unmask(masked, hidden)) == unit


def test_instruction_drawn_from_pool_including_verbatim(reference_files):
    units = [parse_unit(dict(reference_files)["AutoPilot.x"])] * 40
    samples = build_mask_dataset(units, seed=3)
    pool = set(instruction_pool(UnitKind.DISCRETE))
    assert {s.instruction for s in samples} <= pool
    assert MASK_INSTRUCTION_DISCRETE in {s.instruction for s in samples}


def test_kind_specific_instructions(reference_files):
    discrete = parse_unit(dict(reference_files)["AutoPilot.x"])
    continuous = parse_unit(dict(reference_files)["Thrust.x"])
    samples = build_mask_dataset([discrete, continuous], seed=0)
    assert samples[0].instruction in instruction_pool(UnitKind.DISCRETE)
    assert samples[1].instruction in instruction_pool(UnitKind.CONTINUOUS)
    assert MASK_INSTRUCTION_CONTINUOUS in instruction_pool(UnitKind.CONTINUOUS)


def test_seeded_dataset_is_byte_identical(corpus_units):
    units = _atomics(corpus_units)
    a = to_jsonl(build_mask_dataset(units, seed=42))
    b = to_jsonl(build_mask_dataset(units, seed=42))
    assert a == b
    c = to_jsonl(build_mask_dataset(units, seed=43))
    assert a != c  # the seed actually matters


def test_jsonl_field_names_bit_exact(corpus_units):
    units = _atomics(corpus_units)[:3]
    lines = to_jsonl(build_mask_dataset(units, seed=0)).splitlines()
    assert len(lines) == 3
    for line in lines:
        record = json.loads(line)
        assert list(record) == ["instruction", "input", "output"]
        assert MASK in record["input"]


def test_couple_units_rejected(corpus_units):
    couple = next(u for u in corpus_units if u.kind is UnitKind.COUPLE)
    with pytest.raises(DatasetError):
        build_mask_dataset([couple])


def test_unmask_validates_mask_count():
    with pytest.raises(DatasetError):
        unmask("no mask here", "value:\n  Real x = 0;")
