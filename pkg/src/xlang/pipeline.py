"""End-to-end generation: document -> corpus -> composition -> couple ->
atomic skeletons -> backend-filled units -> function units, with prompt
transcripts and a reproducibility manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

from . import __version__
from .backends import CompletionLimits
from .diagnostics import Diagnostic, error
from .docpipe import (
    NameMap,
    DEFAULT_GUARDS,
    SystemComposition,
    apply_edits,
    build_composition,
    slice_corpus,
    split_sentences,
    strip_markdown,
    tag_document,
    normalize_name,
)
from .linker import invoked_call_symbols, link_model_set
from .model import ModelUnit, PartDecl, UnitKind
from .orchestrator import Exhausted, fill_hole, generate_missing_functions, infer_connections
from .printer import print_unit
from .templates import (
    GeneratorPortTypes,
    Hole,
    PortConvention,
    StaticPortTypes,
    build_couple,
    extract_subsystem_ports,
    make_atomic_skeleton,
)


@dataclass
class PipelineConfig:
    """Declarative run configuration; unknown keys are rejected upstream."""

    components: dict[str, dict] = field(default_factory=dict)  # doc name -> {class_name, kind, instance}
    port_types: dict[str, str] = field(default_factory=dict)
    port_type_source: str = "static"  # "static" | "generator"
    convention: PortConvention = PortConvention.DATAFLOW
    repair_budget: int = 3
    seed: int = 0
    guards: tuple[str, ...] = DEFAULT_GUARDS
    max_tokens: int = 2048
    temperature: float = 0.0

    def __post_init__(self):
        if isinstance(self.convention, str):
            self.convention = PortConvention(self.convention)
        self.guards = tuple(self.guards)

    def limits(self) -> CompletionLimits:
        return CompletionLimits(self.max_tokens, self.temperature, self.seed)

    def naming(self) -> NameMap:
        classes = {}
        instances = {}
        for doc_name, spec in self.components.items():
            if "class_name" in spec:
                classes[doc_name] = spec["class_name"]
            if "instance" in spec:
                instances[doc_name] = spec["instance"]
        return NameMap(classes, instances)

    def kind_for(self, component_name: str) -> UnitKind:
        spec = None
        wanted = normalize_name(component_name)
        for doc_name, entry in self.components.items():
            if normalize_name(doc_name) == wanted:
                spec = entry
                break
        kind = (spec or {}).get("kind", "discrete")
        return UnitKind(kind)

    def to_canonical_dict(self) -> dict:
        return {
            "components": {k: dict(sorted(v.items())) for k, v in sorted(self.components.items())},
            "port_types": dict(sorted(self.port_types.items())),
            "port_type_source": self.port_type_source,
            "convention": self.convention.value,
            "repair_budget": self.repair_budget,
            "seed": self.seed,
            "guards": list(self.guards),
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }


@dataclass
class PipelineResult:
    files: dict[str, str]
    composition: SystemComposition
    slices: object
    transcripts: list[dict]
    diagnostics: list[Diagnostic]
    manifest: dict

    @property
    def ok(self) -> bool:
        return not any(d.severity.value == "error" for d in self.diagnostics)


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def run_pipeline(
    document: str,
    config: PipelineConfig,
    backend,
    edits: list[dict] | None = None,
) -> PipelineResult:
    """Steps 1-3: corpus identification, couple generation, atomic
    generation, plus missing-function generation and a final link check."""
    diagnostics: list[Diagnostic] = []
    transcripts: list[dict] = []
    limits = config.limits()
    naming = config.naming()

    text = strip_markdown(document)
    sentences = split_sentences(text, config.guards)
    tagged = tag_document(sentences, diagnostics=diagnostics)
    composition = build_composition(tagged)
    if edits:
        composition = apply_edits(composition, edits)
    diagnostics.extend(composition.diagnostics)
    slices = slice_corpus(tagged, composition)

    sentence_text = {s.sid: s.text for s in tagged}
    connection_corpus = [sentence_text[sid] for sid in slices.connection_corpus]
    connections, conn_diags = infer_connections(
        connection_corpus, composition, backend, naming=naming, limits=limits
    )
    diagnostics.extend(conn_diags)

    couple_template = build_couple(composition.root, connections, naming)
    couple_unit = couple_template.to_unit()
    couple_text = print_unit(couple_unit)

    if config.port_type_source == "generator":
        reasoner = GeneratorPortTypes(backend, document, StaticPortTypes(config.port_types), limits)
    else:
        reasoner = StaticPortTypes(config.port_types)

    units: list[ModelUnit] = [couple_unit]
    functions: dict[str, ModelUnit] = {}
    for child in composition.root.children:
        class_name = naming.class_for(child.name)
        instance = naming.instance_for(child.name)
        kind = config.kind_for(child.name)
        ports = extract_subsystem_ports(
            connections, instance, reasoner, config.convention, diagnostics
        )
        skeleton = make_atomic_skeleton(PartDecl(class_name, instance), ports, kind)
        corpus_ids = slices.component_corpora.get(normalize_name(child.name), [])
        atomic_text = "\n".join(sentence_text[sid] for sid in corpus_ids)
        hole = Hole.STATE if kind is UnitKind.DISCRETE else Hole.EQUATION
        try:
            unit, report = fill_hole(
                skeleton,
                hole,
                backend,
                config.repair_budget,
                couple_text=couple_text,
                atomic_text=atomic_text,
                library=list(functions.values()),
                limits=limits,
            )
        except Exhausted as exc:
            diagnostics.append(
                error("pipeline/generation-exhausted", f"could not generate {class_name}: budget spent")
            )
            transcripts.append({"unit": class_name, **exc.report.to_dict()})
            continue
        transcripts.append({"unit": class_name, **report.to_dict()})

        new_functions, fn_diags = generate_missing_functions(
            unit, functions, backend, limits=limits, repair_budget=config.repair_budget
        )
        diagnostics.extend(fn_diags)
        for fn in new_functions:
            functions.setdefault(fn.name, fn)

        # imports list the functions the model actually uses
        called = sorted(invoked_call_symbols(unit) & set(functions))
        missing_imports = tuple(sym for sym in called if sym not in unit.imports)
        if missing_imports:
            unit = replace(unit, imports=(*unit.imports, *missing_imports))
        units.append(unit)

    units.extend(functions[name] for name in sorted(functions))

    linked = link_model_set(units)
    diagnostics.extend(linked.errors)
    diagnostics.extend(linked.warnings)

    files: dict[str, str] = {}
    for unit in units:
        files[f"{unit.name}.x"] = print_unit(unit)
    files["composition.json"] = json.dumps(composition.to_dict(), indent=2, sort_keys=True) + "\n"
    files["slices.json"] = json.dumps(slices.to_dict(), indent=2, sort_keys=True) + "\n"
    files["transcripts.json"] = json.dumps(transcripts, indent=2, sort_keys=True) + "\n"

    manifest = {
        "tool_version": __version__,
        "config_hash": _sha256(json.dumps(config.to_canonical_dict(), sort_keys=True)),
        "backend": getattr(backend, "name", backend.__class__.__name__),
        "seed": config.seed,
        "inputs": {"document": _sha256(document)},
        "outputs": {name: _sha256(files[name]) for name in sorted(files)},
        "diagnostics": [d.to_dict() for d in diagnostics],
    }
    files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"

    return PipelineResult(files, composition, slices, transcripts, diagnostics, manifest)
