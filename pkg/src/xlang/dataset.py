"""Mask-training dataset builder: hide the behavioral sections of atomic
units behind `[MASK]` and emit instruction/input/output records."""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass

from .diagnostics import XlangError
from .model import ModelUnit, UnitKind
from .printer import SECTION_ORDER, section_lines
from .parser import parse_unit
from .prompts import (
    MASK_INSTRUCTION_CONTINUOUS,
    MASK_INSTRUCTION_DISCRETE,
    MASK_PARAPHRASES_CONTINUOUS,
    MASK_PARAPHRASES_DISCRETE,
)

MASK = "[MASK]"

_SECTION_HEAD_RE = re.compile(
    r"^(part|parameter|value|port|connection|state|equation|body):", re.M
)


class DatasetError(XlangError):
    pass


@dataclass(frozen=True)
class MaskSample:
    instruction: str
    input: str
    output: str

    def to_dict(self) -> dict:
        return {"instruction": self.instruction, "input": self.input, "output": self.output}


def masked_sections(kind: UnitKind) -> tuple[str, ...]:
    if kind is UnitKind.DISCRETE:
        return ("value", "state")
    if kind is UnitKind.CONTINUOUS:
        return ("value", "equation")
    raise DatasetError(f"mask samples cover atomic units, not {kind.value}")


def mask_unit(unit: ModelUnit) -> tuple[str, str]:
    """Canonical text with the behavioral sections replaced by [MASK]
    lines, plus the hidden text (sections in canonical order)."""
    hide = masked_sections(unit.kind)
    lines: list[str] = [f"{unit.kind.value} {unit.name}"]
    hidden_chunks: list[str] = []
    for imp in unit.imports:
        lines.append(f"  import {imp};")
    for section in SECTION_ORDER[unit.kind]:
        chunk = section_lines(unit, section)
        if not chunk:
            continue
        if section in hide:
            lines.append(MASK)
            hidden_chunks.append("\n".join(chunk))
        else:
            lines.extend(chunk)
    lines.append("end;")
    if not hidden_chunks:
        raise DatasetError(f"{unit.name} has no maskable section content")
    return "\n".join(lines) + "\n", "\n".join(hidden_chunks)


def unmask(masked_text: str, hidden_text: str) -> str:
    """Splice hidden section chunks back over the [MASK] lines in order."""
    mask_count = masked_text.count(MASK)
    if mask_count == 0:
        raise DatasetError("input carries no [MASK] marker")
    chunks = _split_sections(hidden_text)
    if len(chunks) != mask_count:
        raise DatasetError(f"{mask_count} mask(s) but {len(chunks)} hidden section(s)")
    out = masked_text
    for chunk in chunks:
        out = out.replace(MASK, chunk, 1)
    return out


def _split_sections(text: str) -> list[str]:
    starts = [m.start() for m in _SECTION_HEAD_RE.finditer(text)]
    if not starts:
        return [text] if text.strip() else []
    chunks = []
    for i, begin in enumerate(starts):
        end = starts[i + 1] if i + 1 < len(starts) else len(text)
        chunks.append(text[begin:end].rstrip("\n"))
    return chunks


def instruction_pool(kind: UnitKind, paraphrase_pool: list[str] | None = None) -> list[str]:
    """The canonical instruction first, then paraphrases for variety."""
    if kind is UnitKind.DISCRETE:
        pool = [MASK_INSTRUCTION_DISCRETE, *MASK_PARAPHRASES_DISCRETE]
    else:
        pool = [MASK_INSTRUCTION_CONTINUOUS, *MASK_PARAPHRASES_CONTINUOUS]
    if paraphrase_pool:
        pool = pool + [p for p in paraphrase_pool if p not in pool]
    return pool


def build_mask_dataset(
    units: list[ModelUnit], paraphrase_pool: list[str] | None = None, seed: int = 0
) -> list[MaskSample]:
    """One sample per atomic unit, instruction drawn with a seeded RNG.

    Every sample is verified on the spot: splicing the output back over
    the masks must reproduce the source unit exactly.
    """
    rng = random.Random(seed)
    samples: list[MaskSample] = []
    for unit in units:
        if unit.kind not in (UnitKind.DISCRETE, UnitKind.CONTINUOUS):
            raise DatasetError(f"{unit.name}: mask samples cover discrete/continuous units only")
        masked, hidden = mask_unit(unit)
        instruction = rng.choice(instruction_pool(unit.kind, paraphrase_pool))
        restored = parse_unit(unmask(masked, hidden))
        if restored != unit:
            raise DatasetError(f"{unit.name}: splice round-trip failed")
        samples.append(MaskSample(instruction, masked, hidden))
    return samples


def to_jsonl(samples: list[MaskSample]) -> str:
    """One JSON object per line, fields exactly instruction/input/output."""
    return "".join(json.dumps(s.to_dict(), ensure_ascii=False) + "\n" for s in samples)
