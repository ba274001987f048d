"""Hierarchical scoring of generated model sets: simulation correctness,
couple and atomic correctness similarity, consistency tallies,
degree-of-error attenuation, and entropy weighting."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import Diagnostic, LinkError, RuntimeFault, XlangError, warning
from .kernel import SimulationConfig, simulate
from .linker import LinkedModel, invoked_call_symbols, link_model_set
from .model import ModelUnit, PortDirection, UnitKind
from .parser import parse_units_lenient
from .trace import PortSetMismatch, SimulationTrace, compare_traces


class WeightMismatch(XlangError):
    pass


class KindMismatch(XlangError):
    pass


class DegenerateMatrix(XlangError):
    pass


class NoModels(XlangError):
    pass


def normalize_element(name: str) -> str:
    """Case-, underscore-, and camel-case-insensitive element identity."""
    return re.sub(r"[\s_]+", "", name).lower()


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty and attenuation constants; defaults are the worked values."""

    epsilon: float = 0.8
    eps_header: float = 0.6
    eps_port: float = 0.6
    eps_definition: float = 0.6
    alpha_c: float = 0.2
    beta_c: float = 0.1
    len_c: int = 1

    def __post_init__(self):
        for name in ("epsilon", "eps_header", "eps_port", "eps_definition"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must be in (0, 1]")
        if not 0 < self.alpha_c < 1 or not 0 < self.beta_c < 1:
            raise ValueError("alpha_c and beta_c must be in (0, 1)")
        if not self.beta_c < self.alpha_c:
            raise ValueError("beta_c must be smaller than alpha_c")
        if self.len_c < 1:
            raise ValueError("len_c must be a positive count")


@dataclass(frozen=True)
class ComponentWeights:
    """Weight groups; each group is normalized to sum to 1.

    For atomic units the inactive indicator's weight (k_e on a discrete
    unit, k_s on a continuous one) is redistributed proportionally over
    the active weights.
    """

    couple: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)  # k_h, k_a, k_c
    atomic: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)  # k_h, k_d, k_s, k_e
    subsystems: dict[str, float] | None = None

    def __post_init__(self):
        for group, size in (("couple", 3), ("atomic", 4)):
            values = getattr(self, group)
            if len(values) != size:
                raise WeightMismatch(f"{group} weight group needs {size} entries")
            if any(v < 0 for v in values):
                raise WeightMismatch(f"{group} weights must be nonnegative")
            if abs(math.fsum(values) - 1.0) > 1e-9:
                raise WeightMismatch(f"{group} weights must sum to 1")

    def atomic_for(self, kind: UnitKind) -> tuple[float, float, float]:
        k_h, k_d, k_s, k_e = self.atomic
        k_b = k_s if kind is UnitKind.DISCRETE else k_e
        total = k_h + k_d + k_b
        if total <= 0:
            raise WeightMismatch("active atomic weights sum to zero")
        return k_h / total, k_d / total, k_b / total

    def subsystem_for(self, children: tuple[str, ...]) -> list[float]:
        if not children:
            return []
        if self.subsystems is None:
            return [1.0 / len(children)] * len(children)
        table = {normalize_element(k): v for k, v in self.subsystems.items()}
        raw = []
        for child in children:
            key = normalize_element(child)
            if key not in table:
                raise WeightMismatch(f"no subsystem weight for {child!r}")
            raw.append(table[key])
        total = math.fsum(raw)
        if total <= 0:
            raise WeightMismatch("subsystem weights sum to zero")
        return [w / total for w in raw]


@dataclass(frozen=True)
class ConsistencyTally:
    consistent: int = 0  # CE
    inconsistent: int = 0  # IE
    details: tuple[str, ...] = ()

    @property
    def is_consistent(self) -> bool:
        return self.inconsistent == 0


@dataclass(frozen=True)
class ErrorCounts:
    syntax: int = 0  # m
    logic: int = 0  # n
    length: int = 1  # len_i

    def __post_init__(self):
        if self.syntax < 0 or self.logic < 0:
            raise ValueError("error counts must be nonnegative")
        if self.length < 1:
            raise ValueError("length must be at least 1")


# -- the metric operations ----------------------------------------------------


def score_couple(parent_a: float, weights: list[float], child_a: list[float]) -> float:
    """Parent score: A_parent times the weighted sum of child correctness."""
    if len(weights) != len(child_a):
        raise WeightMismatch(f"{len(weights)} weights for {len(child_a)} children")
    total = math.fsum(weights)
    if abs(total - 1.0) > 1e-9:
        raise WeightMismatch("subsystem weights must sum to 1")
    if not child_a:
        return parent_a
    return parent_a * (math.fsum(w * a for w, a in zip(weights, child_a)) / total)


def simulation_correctness(verdict, p: float, epsilon: float) -> float:
    """1 for behaviorally correct models, epsilon*P otherwise."""
    matched = verdict.all_match if hasattr(verdict, "all_match") else bool(verdict)
    return 1.0 if matched else epsilon * p


def match_f1(generated, reference, matcher=normalize_element) -> float:
    """F1 over normalized element sets; both-empty counts as a perfect 1."""

    def norm(element):
        if isinstance(element, tuple):
            return tuple(matcher(piece) for piece in element)
        return matcher(element)

    gen = {norm(e) for e in generated}
    ref = {norm(e) for e in reference}
    if not gen and not ref:
        return 1.0
    if not gen or not ref:
        return 0.0
    hits = len(gen & ref)
    precision = hits / len(gen)
    recall = hits / len(ref)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def element_similarity(tally: ConsistencyTally, eps_star: float, consistent: bool | None = None) -> float:
    """1 when consistent, else eps_star scaled by the consistent share."""
    if consistent is None:
        consistent = tally.is_consistent
    if consistent:
        return 1.0
    total = tally.consistent + tally.inconsistent
    if total < 1:
        raise ValueError("inconsistency branch needs CE+IE >= 1")
    return eps_star * tally.consistent / total


def attenuation(alpha_c: float, beta_c: float, len_c: int, len_i: int) -> tuple[float, float]:
    """Length-normalized attenuation coefficients.

    log(alpha_i) = (len_c/len_i) * log(alpha_c), likewise beta; identity
    lengths short-circuit so the base constants pass through exactly.
    """
    if len_i < 1 or len_c < 1:
        raise ValueError("lengths must be positive counts")
    if len_i == len_c:
        return alpha_c, beta_c
    ratio = len_c / len_i
    return math.exp(ratio * math.log(alpha_c)), math.exp(ratio * math.log(beta_c))


def behavior_similarity(counts: ErrorCounts, config: PenaltyConfig) -> float:
    """alpha_i^m * beta_i^n for the state (or equation) part."""
    alpha_i, beta_i = attenuation(config.alpha_c, config.beta_c, config.len_c, counts.length)
    return alpha_i**counts.syntax * beta_i**counts.logic


def couple_similarity(
    p_header: float, f1_part: float, p_port: float, f1_connection: float, weights: tuple[float, float, float]
) -> float:
    k_h, k_a, k_c = weights
    return math.fsum((k_h * p_header, k_a * (f1_part * p_port), k_c * f1_connection))


def atomic_similarity(parts: dict, kind: UnitKind, weights: ComponentWeights) -> float:
    """k_h*P_header + k_d*P_definition + indicator-selected behavior term."""
    if kind is UnitKind.DISCRETE and "equation" in parts:
        raise KindMismatch("discrete units carry P_state, not P_equation")
    if kind is UnitKind.CONTINUOUS and "state" in parts:
        raise KindMismatch("continuous units carry P_equation, not P_state")
    behavior_key = "state" if kind is UnitKind.DISCRETE else "equation"
    k_h, k_d, k_b = weights.atomic_for(kind)
    return math.fsum(
        (
            k_h * parts["header"],
            k_d * parts["definition"],
            k_b * parts.get(behavior_key, 0.0),
        )
    )


def entropy_weights(matrix, diagnostics: list[Diagnostic] | None = None) -> list[float]:
    """Entropy-weight method over an alternatives x criteria matrix.

    p_ij = x_ij / column sum (0/0 -> 0); e_j = -(1/ln n) sum p ln p
    (0*ln0 -> 0); d_j = 1 - e_j; weights = d / sum d.  All-constant input
    falls back to uniform weights with a diagnostic.
    """
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DegenerateMatrix("entropy weighting needs at least 2 alternatives (rows)")
    if (x < 0).any():
        raise DegenerateMatrix("scores must be nonnegative")
    n, m = x.shape
    col_sums = x.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(col_sums > 0, x / np.where(col_sums == 0, 1.0, col_sums), 0.0)
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    e = -plogp.sum(axis=0) / math.log(n)
    d = 1.0 - e
    d = np.where(np.abs(d) < 1e-15, 0.0, d)
    total = d.sum()
    if total <= 0:
        if diagnostics is not None:
            diagnostics.append(
                warning("evaluation/ewm-degenerate", "no criterion varies; falling back to uniform weights")
            )
        return [1.0 / m] * m
    return list(d / total)


# -- consistency extraction ----------------------------------------------------


@dataclass
class UnitConsistency:
    header: ConsistencyTally
    port: ConsistencyTally | None = None  # couple own ports
    definition: ConsistencyTally | None = None  # atomic ports + invoked functions


def consistency_check(linked: LinkedModel) -> dict[str, UnitConsistency]:
    """CE/IE per unit per component under name normalization.

    Header: the unit's name against some couple's Part entry (the top
    couple's name is vacuously consistent) plus each import against the
    defined units.  Couple port: own ports against connection endpoints.
    Atomic definition: declared ports against connection-implied ports
    (direction and peer type must agree) plus invoked functions against
    the function units.
    """
    units = linked.units
    couples = [u for u in units.values() if u.kind is UnitKind.COUPLE]
    part_classes = {normalize_element(p.class_name) for c in couples for p in c.parts}
    imported = {normalize_element(i) for u in units.values() for i in u.imports}
    unit_names = {normalize_element(name) for name in units}
    function_names = {normalize_element(name) for name in linked.functions}

    out: dict[str, UnitConsistency] = {}
    for name in sorted(units):
        unit = units[name]
        ce, ie, details = 0, 0, []

        # a unit's name is consistent when something refers to it: a Part
        # entry, an import (functions), or being the designated top couple
        is_referenced = normalize_element(name) in part_classes or normalize_element(name) in imported
        is_top = unit.kind is UnitKind.COUPLE and (linked.top == name or not is_referenced)
        if is_top or is_referenced:
            ce += 1
        else:
            ie += 1
            details.append(f"name {name!r} matches no Part entry")
        for imp in unit.imports:
            if normalize_element(imp) in unit_names:
                ce += 1
            else:
                ie += 1
                details.append(f"import {imp!r} undefined")
        header = ConsistencyTally(ce, ie, tuple(details))

        if unit.kind is UnitKind.COUPLE:
            out[name] = UnitConsistency(header, port=_couple_port_tally(unit))
        elif unit.kind is UnitKind.FUNCTION:
            out[name] = UnitConsistency(header)
        else:
            out[name] = UnitConsistency(
                header, definition=_atomic_definition_tally(unit, couples, units, function_names)
            )
    return out


def _couple_port_tally(couple: ModelUnit) -> ConsistencyTally:
    declared = {normalize_element(p.name): p for p in couple.ports}
    used: set[str] = set()
    for conn in couple.connections:
        if conn.from_part == "":
            used.add(normalize_element(conn.from_port))
        if conn.to_part == "":
            used.add(normalize_element(conn.to_port))
    ce, ie, details = 0, 0, []
    for key in sorted(set(declared) | used):
        if key in declared and key in used:
            ce += 1
        else:
            ie += 1
            details.append(
                f"own port {key!r} " + ("never wired" if key in declared else "wired but undeclared")
            )
    return ConsistencyTally(ce, ie, tuple(details))


def _implied_ports(unit_name: str, couples: list[ModelUnit], units: dict[str, ModelUnit]):
    """Ports a unit must expose, implied by its parents' connection parts."""
    implied: dict[str, tuple[PortDirection, str | None]] = {}
    target = normalize_element(unit_name)
    for couple in couples:
        instance_class = {
            p.instance_name: p.class_name
            for p in couple.parts
        }
        for conn in couple.connections:
            for part, port, direction, peer in (
                (conn.from_part, conn.from_port, PortDirection.OUTPUT, (conn.to_part, conn.to_port)),
                (conn.to_part, conn.to_port, PortDirection.INPUT, (conn.from_part, conn.from_port)),
            ):
                if not part or normalize_element(instance_class.get(part, "")) != target:
                    continue
                peer_type = None
                peer_unit = units.get(instance_class.get(peer[0], ""))
                if peer_unit is not None:
                    decl = peer_unit.port(peer[1])
                    if decl is not None:
                        peer_type = decl.port_type
                implied[normalize_element(port)] = (direction, peer_type)
    return implied


def _atomic_definition_tally(
    unit: ModelUnit, couples: list[ModelUnit], units: dict[str, ModelUnit], function_names: set[str]
) -> ConsistencyTally:
    ce, ie, details = 0, 0, []
    declared = {normalize_element(p.name): p for p in unit.ports}
    implied = _implied_ports(unit.name, couples, units)
    for key in sorted(set(declared) | set(implied)):
        if key not in declared:
            ie += 1
            details.append(f"port {key!r} wired in the couple but not declared")
            continue
        if key not in implied:
            ie += 1
            details.append(f"port {key!r} declared but never wired")
            continue
        direction, peer_type = implied[key]
        decl = declared[key]
        if decl.direction is not None and decl.direction is not direction:
            ie += 1
            details.append(f"port {key!r} direction disagrees with the connection part")
        elif peer_type is not None and decl.port_type != peer_type:
            ie += 1
            details.append(f"port {key!r} type {decl.port_type} disagrees with peer {peer_type}")
        else:
            ce += 1

    for symbol in sorted(invoked_call_symbols(unit)):
        if normalize_element(symbol) in function_names:
            ce += 1
        else:
            ie += 1
            details.append(f"function {symbol!r} invoked but not defined")
    return ConsistencyTally(ce, ie, tuple(details))


# -- evidence gathering ---------------------------------------------------------


@dataclass
class UnitEvidence:
    """Everything the Eq. 5-15 pipeline needs to know about one unit."""

    name: str
    kind: UnitKind
    fully_correct: bool
    present: bool = True
    header: ConsistencyTally = field(default_factory=ConsistencyTally)
    port: ConsistencyTally | None = None
    f1_part: float | None = None
    f1_connection: float | None = None
    definition: ConsistencyTally | None = None
    counts: ErrorCounts | None = None
    children: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()


@dataclass
class ScoreTree:
    name: str
    kind: str
    a: float
    p: float
    components: dict[str, float]
    weights: dict[str, float]
    children: list["ScoreTree"] = field(default_factory=list)
    final: float | None = None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "kind": self.kind,
            "A": self.a,
            "P": self.p,
            "components": self.components,
            "weights": self.weights,
            "children": [c.to_dict() for c in self.children],
            "final": self.final,
        }
        if self.flags:
            out["flags"] = list(self.flags)
        return out

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


MISSING_TALLY = ConsistencyTally(0, 1, ("generated counterpart missing",))


def component_parts(ev: UnitEvidence, config: PenaltyConfig) -> dict[str, float]:
    """Eq. 12/14 component similarities for one unit."""
    if not ev.present:
        if ev.kind is UnitKind.COUPLE:
            return {"header": 0.0, "attribute": 0.0, "connection": 0.0}
        key = "state" if ev.kind is UnitKind.DISCRETE else "equation"
        return {"header": 0.0, "definition": 0.0, key: 0.0}

    header = element_similarity(ev.header, config.eps_header)
    if ev.kind is UnitKind.COUPLE:
        p_port = element_similarity(ev.port or ConsistencyTally(), config.eps_port)
        return {
            "header": header,
            "attribute": (ev.f1_part or 0.0) * p_port,
            "connection": ev.f1_connection or 0.0,
        }
    definition = element_similarity(ev.definition or ConsistencyTally(), config.eps_definition)
    behavior = behavior_similarity(ev.counts or ErrorCounts(), config)
    if "kind-mismatch" in ev.flags:
        behavior = 0.0
    key = "state" if ev.kind is UnitKind.DISCRETE else "equation"
    return {"header": header, "definition": definition, key: behavior}


def score_evidence(
    evidence: dict[str, UnitEvidence],
    top: str,
    config: PenaltyConfig,
    weights: ComponentWeights,
) -> ScoreTree:
    """Roll component similarities up the tree: Eq. 12/14 -> 7/11 -> 6 -> 5."""

    def build(name: str) -> ScoreTree:
        ev = evidence[name]
        parts = component_parts(ev, config)
        if ev.kind is UnitKind.COUPLE:
            if ev.present:
                p = couple_similarity(
                    parts["header"],
                    ev.f1_part or 0.0,
                    element_similarity(ev.port or ConsistencyTally(), config.eps_port),
                    ev.f1_connection or 0.0,
                    weights.couple,
                )
            else:
                p = 0.0
            used = dict(zip(("k_h", "k_a", "k_c"), weights.couple))
        else:
            p = atomic_similarity(parts, ev.kind, weights) if ev.present else 0.0
            k_h, k_d, k_b = weights.atomic_for(ev.kind)
            used = {"k_h": k_h, "k_d": k_d, ("k_s" if ev.kind is UnitKind.DISCRETE else "k_e"): k_b}
        p = min(1.0, max(0.0, p))
        a = simulation_correctness(ev.fully_correct, p, config.epsilon)

        node = ScoreTree(name, ev.kind.value, a, p, parts, used, flags=ev.flags)
        if ev.kind is UnitKind.COUPLE:
            node.children = [build(child) for child in ev.children]
            child_a = [c.final if c.final is not None else c.a for c in node.children]
            subsystem_weights = weights.subsystem_for(ev.children)
            node.weights.update(
                {f"C_{child}": w for child, w in zip(ev.children, subsystem_weights)}
            )
            node.final = score_couple(a, subsystem_weights, child_a)
        return node

    if top not in evidence:
        raise NoModels(f"no evidence for top-level model {top!r}")
    return build(top)


# -- full evaluation ------------------------------------------------------------


@dataclass
class ReferenceFixture:
    units: list[ModelUnit]
    top: str
    linked: LinkedModel
    sim_config: SimulationConfig
    trace: SimulationTrace


def prepare_reference(texts: list[str], sim_config: SimulationConfig) -> ReferenceFixture:
    units: list[ModelUnit] = []
    for text in texts:
        for result in parse_units_lenient(text):
            if result.unit is None or result.diagnostics:
                raise LinkError(result.diagnostics or [])
            units.append(result.unit)
    linked = link_model_set(units).raise_on_errors()
    trace = simulate(linked, sim_config)
    return ReferenceFixture(units, linked.top, linked, sim_config, trace)


@dataclass
class EvaluationReport:
    tree: ScoreTree
    evidence: dict[str, UnitEvidence]
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def final(self) -> float:
        return self.tree.final if self.tree.final is not None else self.tree.a

    def to_dict(self) -> dict:
        return {
            "score": self.final,
            "tree": self.tree.to_dict(),
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


def _behavior_section(kind: UnitKind) -> str:
    return "state" if kind is UnitKind.DISCRETE else "equation"


def _instance_paths(linked: LinkedModel, unit_name: str) -> list[str]:
    paths = []
    if linked.root is None:
        return paths
    for node in linked.root.walk():
        if node.unit.name == unit_name:
            paths.append(node.path)
    return paths


def _subtrace(trace: SimulationTrace, paths: list[str]) -> SimulationTrace:
    keep = []
    for event in trace.events:
        if any(event.part_path == p or event.part_path.startswith(p + ".") for p in paths):
            keep.append(event)
    return SimulationTrace(keep, trace.end_time)


def _harness_fully_correct(
    reference: ReferenceFixture, ref_unit: ModelUnit, candidate: ModelUnit, trace_tol: float
) -> bool:
    """Wire the candidate among the correctly defined reference units and
    compare its observable outputs against the reference run."""
    test_units = [u for u in reference.units if u.name != ref_unit.name] + [candidate]
    top = reference.top if ref_unit.name != reference.top else candidate.name
    linked = link_model_set(test_units, top=top)
    if linked.errors:
        return False
    try:
        trace = simulate(linked, reference.sim_config)
    except (RuntimeFault, LinkError, XlangError):
        return False
    if ref_unit.name == reference.top:
        got, want = trace, reference.trace
    else:
        paths = _instance_paths(reference.linked, ref_unit.name)
        got, want = _subtrace(trace, paths), _subtrace(reference.trace, paths)
    try:
        return compare_traces(got, want, trace_tol).all_match
    except PortSetMismatch:
        return False


def gather_evidence(
    models: list[tuple[str, str]],
    reference: ReferenceFixture,
    annotations: dict | None = None,
    trace_tol: float = 0.0,
) -> tuple[dict[str, UnitEvidence], list[Diagnostic]]:
    """Parse, link, tally, and test-simulate one generated model set.

    Evidence rows mirror the reference tree; a reference unit with no
    generated counterpart scores zero across its components.
    """
    annotations = annotations or {}
    diagnostics: list[Diagnostic] = []

    parsed: dict[str, dict] = {}
    gen_units: list[ModelUnit] = []
    for filename, text in models:
        for result in parse_units_lenient(text, file=filename):
            diagnostics.extend(result.diagnostics)
            if result.unit is None:
                continue
            gen_units.append(result.unit)
            parsed[normalize_element(result.unit.name)] = {
                "unit": result.unit,
                "diags": result.diagnostics,
                "stats": result.stats,
            }

    gen_top = None
    ref_top_key = normalize_element(reference.top)
    for unit in gen_units:
        if unit.kind is UnitKind.COUPLE and normalize_element(unit.name) == ref_top_key:
            gen_top = unit.name
    gen_linked = link_model_set(gen_units, top=gen_top) if gen_units else None
    tallies = consistency_check(gen_linked) if gen_linked else {}

    evidence: dict[str, UnitEvidence] = {}
    ref_by_name = {u.name: u for u in reference.units}

    def annotation_for(name: str) -> dict:
        for key, value in annotations.items():
            if normalize_element(key) == normalize_element(name):
                return value
        return {}

    def build_unit_evidence(ref_unit: ModelUnit):
        name = ref_unit.name
        record = parsed.get(normalize_element(name))
        flags: list[str] = []
        if record is None:
            evidence[name] = UnitEvidence(
                name,
                ref_unit.kind,
                fully_correct=False,
                present=False,
                header=MISSING_TALLY,
                port=MISSING_TALLY if ref_unit.kind is UnitKind.COUPLE else None,
                definition=MISSING_TALLY if ref_unit.kind is not UnitKind.COUPLE else None,
                f1_part=0.0,
                f1_connection=0.0,
                counts=ErrorCounts(),
                children=_ref_children(ref_unit),
                flags=("missing",),
            )
            return

        unit: ModelUnit = record["unit"]
        tally = tallies.get(unit.name, UnitConsistency(ConsistencyTally()))
        annotation = annotation_for(name)
        fully_correct = _harness_fully_correct(reference, ref_unit, unit, trace_tol)

        if unit.kind is not ref_unit.kind:
            flags.append("kind-mismatch")

        if ref_unit.kind is UnitKind.COUPLE:
            f1_part = match_f1(
                [p.class_name for p in unit.parts], [p.class_name for p in ref_unit.parts]
            )
            f1_connection = match_f1(
                [(c.from_part, c.from_port, c.to_part, c.to_port) for c in unit.connections],
                [(c.from_part, c.from_port, c.to_part, c.to_port) for c in ref_unit.connections],
            )
            evidence[name] = UnitEvidence(
                name,
                ref_unit.kind,
                fully_correct=fully_correct,
                header=tally.header,
                port=tally.port or ConsistencyTally(),
                f1_part=f1_part,
                f1_connection=f1_connection,
                children=_ref_children(ref_unit),
                flags=tuple(flags),
            )
            return

        section = _behavior_section(ref_unit.kind)
        syntax = sum(1 for d in record["diags"] if d.data.get("section") == section)
        if "m" in annotation:
            syntax = int(annotation["m"])
        if "n" in annotation:
            logic = int(annotation["n"])
        else:
            logic = 0
            flags.append("n-assumed-zero")
        length = record["stats"].states_seen if ref_unit.kind is UnitKind.DISCRETE else record["stats"].equations_seen
        counts = ErrorCounts(syntax, logic, max(1, length))
        evidence[name] = UnitEvidence(
            name,
            ref_unit.kind,
            fully_correct=fully_correct,
            header=tally.header,
            definition=tally.definition or ConsistencyTally(),
            counts=counts,
            flags=tuple(flags),
        )

    def _ref_children(ref_unit: ModelUnit) -> tuple[str, ...]:
        return tuple(p.class_name for p in ref_unit.parts)

    def visit(ref_unit: ModelUnit):
        build_unit_evidence(ref_unit)
        for part in ref_unit.parts:
            child = ref_by_name.get(part.class_name)
            if child is not None and child.name not in evidence:
                visit(child)

    visit(ref_by_name[reference.top])
    return evidence, diagnostics


def evaluate_model_set(
    models: list[tuple[str, str]],
    reference: ReferenceFixture,
    annotations: dict | None = None,
    config: PenaltyConfig | None = None,
    weights: ComponentWeights | None = None,
    trace_tol: float = 0.0,
) -> EvaluationReport:
    """Score one generated model set against the reference fixture."""
    if not models:
        raise NoModels("empty model set")
    config = config or PenaltyConfig()
    weights = weights or ComponentWeights()
    evidence, diagnostics = gather_evidence(models, reference, annotations, trace_tol)
    tree = score_evidence(evidence, reference.top, config, weights)
    return EvaluationReport(tree, evidence, diagnostics)


def evaluate_batch(
    model_sets: dict[str, list[tuple[str, str]]],
    reference: ReferenceFixture,
    annotations: dict | None = None,
    config: PenaltyConfig | None = None,
    trace_tol: float = 0.0,
    explicit_weights: ComponentWeights | None = None,
) -> tuple[dict[str, EvaluationReport], ComponentWeights, list[Diagnostic]]:
    """Score a batch, deriving weights by the entropy method when the
    batch carries enough alternatives (>= 2 rows per matrix); otherwise
    fall back to the explicit weights with a diagnostic.

    Component matrices take every unit instance across the batch as a
    row; the subsystem matrix takes one row per set.
    """
    if not model_sets:
        raise NoModels("empty batch")
    config = config or PenaltyConfig()
    base_weights = explicit_weights or ComponentWeights()
    diagnostics: list[Diagnostic] = []

    gathered: dict[str, tuple[dict[str, UnitEvidence], list[Diagnostic]]] = {}
    for set_name in sorted(model_sets):
        gathered[set_name] = gather_evidence(model_sets[set_name], reference, annotations, trace_tol)

    couple_rows: list[list[float]] = []
    atomic_rows: list[list[float]] = []
    for set_name in sorted(gathered):
        evidence, _ = gathered[set_name]
        for name in sorted(evidence):
            ev = evidence[name]
            parts = component_parts(ev, config)
            if ev.kind is UnitKind.COUPLE:
                couple_rows.append([parts["header"], parts["attribute"], parts["connection"]])
            else:
                behavior = parts["state" if ev.kind is UnitKind.DISCRETE else "equation"]
                atomic_rows.append([parts["header"], parts["definition"], behavior])

    couple_w = _ewm_or_fallback(couple_rows, base_weights.couple, "couple", diagnostics)
    atomic3 = _ewm_or_fallback(
        atomic_rows,
        base_weights.atomic_for(UnitKind.DISCRETE),
        "atomic",
        diagnostics,
    )
    k_h, k_d, k_b = atomic3
    total4 = k_h + k_d + 2 * k_b
    atomic4 = (k_h / total4, k_d / total4, k_b / total4, k_b / total4)

    # subsystem weights need child correctness, which needs the component
    # weights above; two-stage computation mirrors the batch procedure
    interim = ComponentWeights(tuple(couple_w), atomic4, None)
    children = tuple(p.class_name for p in reference.linked.units[reference.top].parts)
    subsystem_rows = []
    for set_name in sorted(gathered):
        evidence, _ = gathered[set_name]
        tree = score_evidence(evidence, reference.top, config, interim)
        by_name = {node.name: node for node in tree.walk()}
        subsystem_rows.append(
            [
                (by_name[c].final if by_name[c].final is not None else by_name[c].a) if c in by_name else 0.0
                for c in children
            ]
        )
    if len(subsystem_rows) >= 2:
        sub_w = entropy_weights(subsystem_rows, diagnostics)
        subsystems = {normalize_element(c): w for c, w in zip(children, sub_w)}
    else:
        diagnostics.append(
            warning("evaluation/ewm-batch-too-small", "batch has fewer than 2 sets; using explicit weights")
        )
        subsystems = base_weights.subsystems

    final_weights = ComponentWeights(tuple(couple_w), atomic4, subsystems)
    reports = {}
    for set_name in sorted(gathered):
        evidence, diags = gathered[set_name]
        tree = score_evidence(evidence, reference.top, config, final_weights)
        reports[set_name] = EvaluationReport(tree, evidence, diags)
    return reports, final_weights, diagnostics


def _ewm_or_fallback(rows, fallback, label, diagnostics):
    if len(rows) >= 2:
        return entropy_weights(rows, diagnostics)
    diagnostics.append(
        warning("evaluation/ewm-batch-too-small", f"not enough {label} rows for EWM; using explicit weights")
    )
    return list(fallback)


# -- report rendering -----------------------------------------------------------


def flat_table(tree: ScoreTree) -> str:
    """One row per unit for spreadsheet-style comparison."""
    header = ["name", "kind", "A", "P", "header", "attribute|definition", "connection|state|equation", "final"]
    rows = [header]
    for node in tree.walk():
        comp = node.components
        middle = comp.get("attribute", comp.get("definition", 0.0))
        last = comp.get("connection", comp.get("state", comp.get("equation", 0.0)))
        rows.append(
            [
                node.name,
                node.kind,
                f"{node.a:.6f}",
                f"{node.p:.6f}",
                f"{comp.get('header', 0.0):.6f}",
                f"{middle:.6f}",
                f"{last:.6f}",
                "" if node.final is None else f"{node.final:.6f}",
            ]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def report_json(report: EvaluationReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)
