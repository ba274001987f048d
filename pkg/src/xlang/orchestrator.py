"""Generation orchestration: call a backend to fill template holes and
infer connections, extract code from mixed prose, and run the
verify/repair loop with error-class notes."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .backends import CompletionLimits
from .diagnostics import Diagnostic, XlangError, warning
from .lexer import tokenize
from .linker import link_model_set
from .model import Connection, ModelUnit, UnitKind
from .parser import parse_unit
from .printer import print_unit
from .prompts import (
    build_connection_prompt,
    build_function_prompt,
    build_state_prompt,
)
from .templates import HOLE_SECTION, Hole, TemplateInstance


class Exhausted(XlangError):
    """Repair budget spent without an acceptable unit."""

    def __init__(self, report: "RepairReport"):
        self.report = report
        super().__init__(f"generation failed after {len(report.attempts)} attempt(s)")


class UnparseableOutput(XlangError):
    """The backend never produced output matching the line grammar."""


@dataclass
class RepairAttempt:
    generated_text: str
    diagnostics: list[str]
    note_added: str | None
    prompt_digest: str = ""


@dataclass
class RepairReport:
    attempts: list[RepairAttempt] = field(default_factory=list)
    final: ModelUnit | None = None

    def to_dict(self) -> dict:
        return {
            "attempts": [
                {
                    "generated_text": a.generated_text,
                    "diagnostics": a.diagnostics,
                    "note_added": a.note_added,
                    "prompt_digest": a.prompt_digest,
                }
                for a in self.attempts
            ],
            "accepted": self.final.name if self.final else None,
        }


# notes appended per diagnostic class (the Note prompt row)
NOTE_TEXTS = {
    "syntax": (
        "The previous output was not valid X language ({detail}). Emit only "
        "section code: every item ends with `;` and every block closes with `end;`."
    ),
    "unknown identifier": (
        "The previous output referenced identifiers that are not declared "
        "({detail}). Use only the model's declared ports, values, and parameters."
    ),
    "missing section": (
        "The previous output did not include the required `{detail}:` section. "
        "Include that section in full."
    ),
}

_FENCE_RE = re.compile(r"```[A-Za-z0-9_+-]*\n(.*?)```", re.S)
_SECTION_START_RE = re.compile(r"^\s*(part|parameter|value|port|connection|state|equation|body)\s*:", re.M)
_UNIT_START_RE = re.compile(r"^\s*(couple|discrete|continuous|function)\s+[A-Za-z_]\w*", re.M)


def extract_code(raw: str, expect_unit: bool = False) -> str:
    """Pull X code out of a model reply that may mix prose and fences.

    Prefers fenced blocks; otherwise scans from the first class or section
    keyword.  A dangling unit-level `end;` left by over-eager generations
    is trimmed when it would unbalance section text.
    """
    text = raw
    fences = _FENCE_RE.findall(raw)
    if fences:
        keyworded = [f for f in fences if _SECTION_START_RE.search(f) or _UNIT_START_RE.search(f)]
        text = (keyworded or fences)[0]
    else:
        unit_match = _UNIT_START_RE.search(text)
        section_match = _SECTION_START_RE.search(text)
        if expect_unit and unit_match:
            text = text[unit_match.start() :]
        elif section_match and (unit_match is None or section_match.start() <= unit_match.start()):
            text = text[section_match.start() :]
        elif unit_match:
            text = text[unit_match.start() :]

    text = text.strip("\n")
    if expect_unit:
        return _truncate_after_balanced_end(text)
    return _trim_surplus_end(text)


def _token_texts(text: str) -> list[str] | None:
    try:
        return [t.text for t in tokenize(text) if t.type != "eof"]
    except XlangError:
        return None


def _block_balance(tokens: list[str]) -> int:
    """Opens by `state`/`when`/class keywords minus `end ;` closers."""
    opens = 0
    closes = 0
    for i, tok in enumerate(tokens):
        following = tokens[i + 1] if i + 1 < len(tokens) else ""
        if tok in ("state", "when") and following != ":":
            opens += 1
        elif tok in ("couple", "discrete", "continuous", "function") and following != ":":
            opens += 1
        elif tok == "end" and following == ";":
            closes += 1
    return opens - closes


def _trim_surplus_end(text: str) -> str:
    """Drop trailing `end;` lines that close more blocks than were opened."""
    tokens = _token_texts(text)
    if tokens is None:
        return text
    while _block_balance(tokens) < 0:
        stripped = text.rstrip()
        if not stripped.endswith("end;"):
            break
        text = stripped[: -len("end;")].rstrip("\n ")
        tokens = _token_texts(text)
        if tokens is None:
            break
    return text


def _truncate_after_balanced_end(text: str) -> str:
    """For whole-unit extraction: cut right after the `end;` closing the unit."""
    try:
        tokens = tokenize(text)
    except XlangError:
        return text
    depth = 0
    for i, tok in enumerate(tokens):
        if tok.type != "ident" and tok.text != ";":
            continue
        following = tokens[i + 1] if i + 1 < len(tokens) else None
        if tok.text in ("couple", "discrete", "continuous", "function", "state", "when"):
            if following is not None and following.text != ":":
                depth += 1
        elif tok.text == "end" and following is not None and following.text == ";":
            depth -= 1
            if depth <= 0:
                end_tok = tokens[i + 1]
                lines = text.splitlines()
                cut = sum(len(l) + 1 for l in lines[: end_tok.line - 1]) + end_tok.col
                return text[:cut]
    return text


def _classify(diagnostics: list[Diagnostic], missing_section: str | None) -> tuple[str, str]:
    if missing_section is not None:
        return "missing section", missing_section
    for diag in diagnostics:
        if diag.code == "link/unknown-identifier":
            return "unknown identifier", diag.message
    for diag in diagnostics:
        if diag.code.startswith("parse/") or diag.code == "link/bad-expression":
            return "syntax", diag.message
    return "syntax", diagnostics[0].message if diagnostics else "unspecified fault"


def fill_hole(
    skeleton: TemplateInstance,
    hole: Hole,
    backend,
    repair_budget: int = 3,
    *,
    couple_text: str = "",
    atomic_text: str = "",
    library: list[ModelUnit] = (),
    limits: CompletionLimits | None = None,
    examples: list[ModelUnit] | None = None,
) -> tuple[ModelUnit, RepairReport]:
    """Generate a hole's section, splice, verify, and repair up to budget.

    Verification: extracted code must parse inside the skeleton, contain
    the target section keyword, and link cleanly against the function
    library (unresolved *calls* are tolerated; missing-function generation
    runs afterwards).  Each failed attempt appends one classified Note.
    """
    if hole not in skeleton.holes:
        raise XlangError(f"{hole.value} is not an open hole of {skeleton.unit.name}")
    if repair_budget < 1:
        raise ValueError("repair_budget must be >= 1")
    limits = limits or CompletionLimits()
    keyword = HOLE_SECTION[hole]
    report = RepairReport()
    notes: list[str] = []

    for _attempt in range(repair_budget):
        if hole is Hole.FUNCTION_BODY:
            bundle = build_function_prompt(skeleton.unit.name, skeleton.render(), notes)
        else:
            bundle = build_state_prompt(couple_text, atomic_text, skeleton, notes, examples)
        raw = backend.complete(bundle, limits)
        code = extract_code(raw)
        attempt = RepairAttempt(raw, [], None, bundle.digest())
        report.attempts.append(attempt)

        diagnostics: list[Diagnostic] = []
        missing = keyword if not re.search(rf"^\s*{keyword}\s*:", code, re.M) else None
        unit = None
        if missing is None:
            candidate = skeleton.fill(hole, code)
            try:
                unit = parse_unit(candidate.render_without_holes())
            except XlangError as exc:
                diagnostics.append(getattr(exc, "diagnostic", None) or _as_diag(exc))
            if unit is not None:
                functions = [u for u in library if u.kind is UnitKind.FUNCTION and u.name != unit.name]
                linked = link_model_set([unit, *functions])
                diagnostics.extend(linked.errors)
        if unit is not None and not diagnostics:
            report.final = unit
            return unit, report

        attempt.diagnostics = [str(d) for d in diagnostics] or ([f"missing `{missing}:` section"] if missing else [])
        cls, detail = _classify(diagnostics, missing)
        note = NOTE_TEXTS[cls].format(detail=detail)
        attempt.note_added = note
        notes.append(note)

    raise Exhausted(report)


def _as_diag(exc: Exception) -> Diagnostic:
    from .diagnostics import Severity

    return Diagnostic(Severity.ERROR, "parse/failure", str(exc))


_CONNECT_LINE_RE = re.compile(
    r"connect\s*\(\s*([A-Za-z_]\w*)\s*\.\s*([A-Za-z_]\w*)\s*,\s*([A-Za-z_]\w*)\s*\.\s*([A-Za-z_]\w*)\s*\)\s*;?"
)


def infer_connections(
    connection_corpus: list[str],
    composition,
    backend,
    *,
    naming=None,
    limits: CompletionLimits | None = None,
    retry_budget: int = 2,
) -> tuple[list[Connection], list[Diagnostic]]:
    """Infer `connect(part.port, part.port)` relations from the corpus.

    Output is filtered to parts that exist in the composition (class or
    instance spellings both accepted, normalized to instance names);
    hallucinated parts are dropped with a diagnostic.
    """
    from .docpipe import NameMap, normalize_ident

    naming = naming or NameMap()
    diagnostics: list[Diagnostic] = []
    if not connection_corpus:
        diagnostics.append(warning("orchestrator/empty-connection-corpus", "no connection sentences; no connections inferred"))
        return [], diagnostics

    children = list(composition.root.children)
    if not children:
        raise XlangError("composition has no subsystems")
    instance_of: dict[str, str] = {}
    instances = []
    for child in children:
        instance = naming.instance_for(child.name)
        instances.append(instance)
        instance_of[normalize_ident(instance)] = instance
        instance_of[normalize_ident(naming.class_for(child.name))] = instance
        instance_of[normalize_ident(child.name)] = instance

    composition_text = "\n".join(
        f"- {naming.class_for(c.name)} {naming.instance_for(c.name)}" for c in children
    )

    notes: list[str] = []
    limits = limits or CompletionLimits()
    text = ""
    for _attempt in range(retry_budget):
        bundle = build_connection_prompt(connection_corpus, composition_text, instances, notes)
        text = backend.complete(bundle, limits)
        matches = _CONNECT_LINE_RE.findall(text)
        if matches or not text.strip():
            connections: list[Connection] = []
            seen = set()
            for from_part, from_port, to_part, to_port in matches:
                src = instance_of.get(normalize_ident(from_part))
                dst = instance_of.get(normalize_ident(to_part))
                if src is None or dst is None:
                    ghost = from_part if src is None else to_part
                    diagnostics.append(
                        warning(
                            "orchestrator/unknown-part-dropped",
                            f"inferred connection references unknown part {ghost!r}; dropped",
                        )
                    )
                    continue
                conn = Connection(src, from_port, dst, to_port)
                key = (src, from_port, dst, to_port)
                if key not in seen:
                    seen.add(key)
                    connections.append(conn)
            if not connections and not matches:
                diagnostics.append(
                    warning("orchestrator/no-connections", "backend inferred no connections")
                )
            return connections, diagnostics
        notes.append(
            "The previous output contained no parseable `connect(<part>.<port>, "
            "<part>.<port>);` line. Emit only such lines."
        )
    raise UnparseableOutput(f"no parseable connect lines after {retry_budget} attempt(s): {text[:200]!r}")


def generate_missing_functions(
    unit: ModelUnit,
    library: dict[str, ModelUnit],
    backend,
    *,
    limits: CompletionLimits | None = None,
    repair_budget: int = 2,
) -> tuple[list[ModelUnit], list[Diagnostic]]:
    """One function unit per unresolved call symbol, recursion depth 1.

    Generated functions must parse as `function` units with the requested
    name; their own unresolved calls are only flagged, never generated.
    """
    limits = limits or CompletionLimits()
    diagnostics: list[Diagnostic] = []
    linked = link_model_set([unit, *library.values()])
    missing = sorted(sym for sym, users in linked.unresolved_calls.items() if unit.name in users)
    generated: list[ModelUnit] = []
    caller_text = print_unit(unit)

    for symbol in missing:
        notes: list[str] = []
        produced = None
        for _attempt in range(repair_budget):
            bundle = build_function_prompt(symbol, caller_text, notes)
            raw = backend.complete(bundle, limits)
            code = extract_code(raw, expect_unit=True)
            try:
                candidate = parse_unit(code)
            except XlangError as exc:
                notes.append(NOTE_TEXTS["syntax"].format(detail=str(exc)))
                continue
            if candidate.kind is not UnitKind.FUNCTION or candidate.name != symbol:
                notes.append(
                    f"The output must be a `function {symbol}` unit; it was "
                    f"`{candidate.kind.value} {candidate.name}`."
                )
                continue
            produced = candidate
            break
        if produced is None:
            diagnostics.append(
                warning("orchestrator/function-not-generated", f"could not generate function {symbol!r}")
            )
            continue
        generated.append(produced)
        # depth-1 rule: report, do not recurse
        sub = link_model_set([produced, *library.values(), *generated])
        for sym in sorted(sub.unresolved_calls):
            if sym != symbol and produced.name in sub.unresolved_calls[sym]:
                diagnostics.append(
                    warning(
                        "orchestrator/nested-missing-function",
                        f"generated function {symbol!r} itself calls undefined {sym!r}",
                    )
                )
    return generated, diagnostics
