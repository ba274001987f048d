"""FastAPI service wrapping the core package.

Handlers are stateless and deterministic: they receive file contents
inline and return structured results; clients own the filesystem."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..backends import make_backend
from ..dataset import build_mask_dataset, to_jsonl
from ..diagnostics import Diagnostic, XlangError
from ..docpipe import (
    DEFAULT_GUARDS,
    apply_edits,
    build_composition,
    slice_corpus,
    split_sentences,
    strip_markdown,
    tag_document,
)
from ..evaluation import (
    ComponentWeights,
    PenaltyConfig,
    ScoreTree,
    evaluate_batch,
    evaluate_model_set,
    flat_table,
    prepare_reference,
)
from ..kernel import SimulationConfig, simulate
from ..linker import link_model_set
from ..model import UnitKind
from ..parser import parse_units, parse_units_lenient
from ..pipeline import PipelineConfig, run_pipeline
from ..trace import format_value
from . import schemas as s


def _diag_out(diag: Diagnostic) -> s.DiagnosticOut:
    payload = diag.to_dict()
    return s.DiagnosticOut(**payload)


def _http_error(exc: XlangError, status: int = 422) -> HTTPException:
    code = getattr(getattr(exc, "diagnostic", None), "code", exc.__class__.__name__)
    return HTTPException(status_code=status, detail={"code": code, "message": str(exc)})


def _parse_files_lenient(files: list[s.FileIn]):
    units = []
    diagnostics: list[Diagnostic] = []
    for f in files:
        for result in parse_units_lenient(f.text, file=f.path):
            diagnostics.extend(result.diagnostics)
            if result.unit is not None:
                units.append(result.unit)
    return units, diagnostics


def create_app() -> FastAPI:
    app = FastAPI(title="xlang service", version=__version__)

    @app.get("/health", response_model=s.HealthOut)
    def health() -> s.HealthOut:
        return s.HealthOut(status="ok", version=__version__)

    @app.post("/check", response_model=s.CheckResponse)
    def check(request: s.CheckRequest) -> s.CheckResponse:
        units, diagnostics = _parse_files_lenient(request.files)
        if units and not diagnostics:
            has_couple = any(u.kind is UnitKind.COUPLE for u in units)
            linked = link_model_set(units) if has_couple else link_model_set(units, top=None)
            if has_couple:
                diagnostics.extend(linked.errors)
            else:
                diagnostics.extend(d for d in linked.errors if d.code != "link/no-top-level")
            diagnostics.extend(linked.warnings)
        ok = not any(d.severity.value == "error" for d in diagnostics)
        return s.CheckResponse(ok=ok, diagnostics=[_diag_out(d) for d in diagnostics])

    @app.post("/simulate", response_model=s.SimulateResponse)
    def simulate_endpoint(request: s.SimulateRequest) -> s.SimulateResponse:
        try:
            units = [u for f in request.files for u in parse_units(f.text, file=f.path)]
            linked = link_model_set(units, top=request.top).raise_on_errors()
            config = SimulationConfig(
                end_time=request.end_time,
                continuous_step=request.continuous_step,
                integrator=request.integrator,
                seed=request.seed,
            )
            trace = simulate(linked, config)
        except (XlangError, ValueError) as exc:
            raise _http_error(exc if isinstance(exc, XlangError) else XlangError(str(exc)))
        events = [
            s.EventOut(time=e.time, part=e.part_path, port=e.port, value=e.value)
            for e in trace.events
        ]
        return s.SimulateResponse(events=events, tsv=trace.to_tsv(), final_values=_stringify(trace.final_values))

    @app.post("/extract", response_model=s.ExtractResponse)
    def extract(request: s.ExtractRequest) -> s.ExtractResponse:
        diagnostics: list[Diagnostic] = []
        guards = tuple(request.guards) if request.guards is not None else DEFAULT_GUARDS
        sentences = split_sentences(strip_markdown(request.document), guards)
        tagged = tag_document(sentences, diagnostics=diagnostics)
        try:
            composition = build_composition(tagged)
            if request.edits:
                composition = apply_edits(composition, request.edits)
        except XlangError as exc:
            raise _http_error(exc)
        diagnostics.extend(composition.diagnostics)
        slices = slice_corpus(tagged, composition)
        return s.ExtractResponse(
            composition=composition.to_dict(),
            slices=slices.to_dict(),
            sentences=[
                s.SentenceOut(
                    sid=t.sid,
                    text=t.text,
                    classes=sorted(c.value for c in t.classes),
                    tokens=[
                        s.TaggedTokenOut(text=tok.text, start=tok.start, end=tok.end, tag=tok.tag)
                        for tok in t.tokens
                    ],
                )
                for t in tagged
            ],
            diagnostics=[_diag_out(d) for d in diagnostics],
        )

    @app.post("/pipeline", response_model=s.PipelineResponse)
    def pipeline(request: s.PipelineRequest) -> s.PipelineResponse:
        cfg = request.config
        config = PipelineConfig(
            components=cfg.components,
            port_types=cfg.port_types,
            port_type_source=cfg.port_type_source,
            convention=cfg.convention,
            repair_budget=cfg.repair_budget,
            seed=cfg.seed,
            guards=tuple(cfg.guards) if cfg.guards is not None else DEFAULT_GUARDS,
            max_tokens=cfg.max_tokens,
            temperature=cfg.temperature,
        )
        try:
            backend = make_backend(
                request.backend.kind,
                replay=request.backend.replay,
                replay_dir=request.backend.replay_dir,
                endpoint=request.backend.endpoint,
                api_key_env=request.backend.api_key_env,
                model=request.backend.model,
            )
            result = run_pipeline(request.document, config, backend, request.edits)
        except XlangError as exc:
            raise _http_error(exc)
        return s.PipelineResponse(
            ok=result.ok,
            files=[s.FileIn(path=p, text=result.files[p]) for p in sorted(result.files)],
            diagnostics=[_diag_out(d) for d in result.diagnostics],
            manifest=result.manifest,
            transcripts=result.transcripts,
        )

    @app.post("/dataset", response_model=s.DatasetResponse)
    def dataset(request: s.DatasetRequest) -> s.DatasetResponse:
        try:
            units = [u for f in request.files for u in parse_units(f.text, file=f.path)]
            atomic = [u for u in units if u.kind in (UnitKind.DISCRETE, UnitKind.CONTINUOUS)]
            samples = build_mask_dataset(atomic, request.paraphrases, request.seed)
        except XlangError as exc:
            raise _http_error(exc)
        return s.DatasetResponse(
            samples=[s.SampleOut(**sample.to_dict()) for sample in samples],
            jsonl=to_jsonl(samples),
        )

    @app.post("/evaluate", response_model=s.EvaluateResponse)
    def evaluate(request: s.EvaluateRequest) -> s.EvaluateResponse:
        try:
            sim_config = SimulationConfig(
                end_time=request.end_time,
                continuous_step=request.continuous_step,
                integrator=request.integrator,
            )
            reference = prepare_reference([f.text for f in request.reference], sim_config)
            penalties = PenaltyConfig(**request.penalties.model_dump())
            weights = ComponentWeights(
                tuple(request.weights.couple),
                tuple(request.weights.atomic),
                request.weights.subsystems,
            )
            if request.batch is not None:
                sets = {
                    name: [(f.path, f.text) for f in files] for name, files in request.batch.items()
                }
                if request.weights_source == "ewm":
                    reports, used_weights, diags = evaluate_batch(
                        sets,
                        reference,
                        request.annotations,
                        penalties,
                        request.trace_tol,
                        explicit_weights=weights,
                    )
                else:
                    reports = {
                        name: evaluate_model_set(
                            files, reference, request.annotations, penalties, weights, request.trace_tol
                        )
                        for name, files in sets.items()
                    }
                    used_weights, diags = weights, []
                return s.EvaluateResponse(
                    reports={name: r.to_dict() for name, r in sorted(reports.items())},
                    weights=_weights_dict(used_weights),
                    diagnostics=[_diag_out(d) for d in diags],
                )
            if request.models is None:
                raise _http_error(XlangError("provide `models` or `batch`"))
            report = evaluate_model_set(
                [(f.path, f.text) for f in request.models],
                reference,
                request.annotations,
                penalties,
                weights,
                request.trace_tol,
            )
            if request.weights_source == "ewm":
                from ..diagnostics import warning

                report.diagnostics.append(
                    warning(
                        "evaluation/ewm-batch-too-small",
                        "entropy weighting needs a batch of >= 2 sets; used explicit weights",
                    )
                )
        except XlangError as exc:
            raise _http_error(exc)
        return s.EvaluateResponse(
            score=report.final,
            report=report.to_dict(),
            table=flat_table(report.tree),
            diagnostics=[_diag_out(d) for d in report.diagnostics],
        )

    @app.post("/report", response_model=s.ReportResponse)
    def report(request: s.ReportRequest) -> s.ReportResponse:
        try:
            tree = _tree_from_dict(request.report.get("tree", request.report))
        except (KeyError, TypeError) as exc:
            raise HTTPException(status_code=422, detail={"message": f"malformed report: {exc}"})
        return s.ReportResponse(table=flat_table(tree))

    return app


def _tree_from_dict(data: dict) -> ScoreTree:
    return ScoreTree(
        name=data["name"],
        kind=data.get("kind", ""),
        a=data["A"],
        p=data["P"],
        components=data.get("components", {}),
        weights=data.get("weights", {}),
        children=[_tree_from_dict(c) for c in data.get("children", [])],
        final=data.get("final"),
        flags=tuple(data.get("flags", ())),
    )


def _weights_dict(weights: ComponentWeights) -> dict:
    return {
        "couple": list(weights.couple),
        "atomic": list(weights.atomic),
        "subsystems": dict(sorted(weights.subsystems.items())) if weights.subsystems else None,
    }


def _stringify(final_values: dict[str, dict]) -> dict[str, dict]:
    return {
        path: {key: format_value(value) if not isinstance(value, str) else value for key, value in env.items()}
        for path, env in final_values.items()
    }


app = create_app()
