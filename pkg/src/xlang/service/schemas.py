"""Pydantic request/response models for the service API."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FileIn(StrictModel):
    path: str
    text: str


class SpanOut(BaseModel):
    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int


class DiagnosticOut(BaseModel):
    severity: str
    code: str
    message: str
    span: SpanOut | None = None
    data: dict | None = None


class HealthOut(BaseModel):
    status: str
    version: str


class CheckRequest(StrictModel):
    files: list[FileIn]


class CheckResponse(BaseModel):
    ok: bool
    diagnostics: list[DiagnosticOut]


class SimulateRequest(StrictModel):
    files: list[FileIn]
    top: str | None = None
    end_time: float = 10.0
    continuous_step: float = 1.0
    integrator: str = "euler"
    seed: int = 0


class EventOut(BaseModel):
    time: float
    part: str
    port: str
    value: float | bool | str | int


class SimulateResponse(BaseModel):
    events: list[EventOut]
    tsv: str
    final_values: dict[str, dict]


class ExtractRequest(StrictModel):
    document: str
    edits: list[dict] | None = None
    guards: list[str] | None = None


class TaggedTokenOut(BaseModel):
    text: str
    start: int
    end: int
    tag: int


class SentenceOut(BaseModel):
    sid: int
    text: str
    classes: list[str]
    tokens: list[TaggedTokenOut]


class ExtractResponse(BaseModel):
    composition: dict
    slices: dict
    sentences: list[SentenceOut]
    diagnostics: list[DiagnosticOut]


class BackendConfigIn(StrictModel):
    kind: str = "template-stub"  # replay | template-stub | http
    replay: dict[str, str] | None = None
    replay_dir: str | None = None
    endpoint: str | None = None
    api_key_env: str | None = None
    model: str | None = None


class PipelineConfigIn(StrictModel):
    components: dict[str, dict] = Field(default_factory=dict)
    port_types: dict[str, str] = Field(default_factory=dict)
    port_type_source: str = "static"
    convention: str = "dataflow"
    repair_budget: int = 3
    seed: int = 0
    guards: list[str] | None = None
    max_tokens: int = 2048
    temperature: float = 0.0


class PipelineRequest(StrictModel):
    document: str
    config: PipelineConfigIn = Field(default_factory=PipelineConfigIn)
    backend: BackendConfigIn = Field(default_factory=BackendConfigIn)
    edits: list[dict] | None = None


class PipelineResponse(BaseModel):
    ok: bool
    files: list[FileIn]
    diagnostics: list[DiagnosticOut]
    manifest: dict
    transcripts: list[dict]


class DatasetRequest(StrictModel):
    files: list[FileIn]
    seed: int = 0
    paraphrases: list[str] | None = None


class SampleOut(BaseModel):
    instruction: str
    input: str
    output: str


class DatasetResponse(BaseModel):
    samples: list[SampleOut]
    jsonl: str


class PenaltiesIn(StrictModel):
    epsilon: float = 0.8
    eps_header: float = 0.6
    eps_port: float = 0.6
    eps_definition: float = 0.6
    alpha_c: float = 0.2
    beta_c: float = 0.1
    len_c: int = 1


class WeightsIn(StrictModel):
    couple: list[float] = Field(default_factory=lambda: [1 / 3, 1 / 3, 1 / 3])
    atomic: list[float] = Field(default_factory=lambda: [0.25, 0.25, 0.25, 0.25])
    subsystems: dict[str, float] | None = None


class EvaluateRequest(StrictModel):
    models: list[FileIn] | None = None
    batch: dict[str, list[FileIn]] | None = None
    reference: list[FileIn]
    annotations: dict[str, dict] | None = None
    penalties: PenaltiesIn = Field(default_factory=PenaltiesIn)
    weights: WeightsIn = Field(default_factory=WeightsIn)
    weights_source: str = "explicit"  # explicit | ewm
    end_time: float = 20.0
    continuous_step: float = 1.0
    integrator: str = "euler"
    trace_tol: float = 0.0


class EvaluateResponse(BaseModel):
    score: float | None = None
    report: dict | None = None
    table: str | None = None
    reports: dict[str, dict] | None = None
    weights: dict | None = None
    diagnostics: list[DiagnosticOut] = Field(default_factory=list)


class ReportRequest(StrictModel):
    report: dict


class ReportResponse(BaseModel):
    table: str
