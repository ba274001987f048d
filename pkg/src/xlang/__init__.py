"""Toolkit for X-language simulation models: parse, simulate, generate,
and score them, with pluggable text-generation backends."""

__version__ = "0.1.0"

from .diagnostics import (  # noqa: E402
    BackendFailure,
    BackendUnavailable,
    Diagnostic,
    LinkError,
    MissingEnd,
    ParseError,
    RuntimeFault,
    SourceSpan,
    XlangError,
)
from .model import ModelUnit, UnitKind  # noqa: E402
from .parser import parse_unit, parse_unit_lenient, parse_units, parse_units_lenient  # noqa: E402
from .printer import print_unit, print_units  # noqa: E402
from .linker import LinkedModel, link_model_set  # noqa: E402
from .kernel import Integrator, SimulationConfig, simulate, step_atomic  # noqa: E402
from .trace import PortEvent, SimulationTrace, TraceDiff, compare_traces  # noqa: E402

__all__ = [
    "BackendFailure",
    "BackendUnavailable",
    "Diagnostic",
    "Integrator",
    "LinkError",
    "LinkedModel",
    "MissingEnd",
    "ModelUnit",
    "ParseError",
    "PortEvent",
    "RuntimeFault",
    "SimulationConfig",
    "SimulationTrace",
    "SourceSpan",
    "TraceDiff",
    "UnitKind",
    "XlangError",
    "compare_traces",
    "link_model_set",
    "parse_unit",
    "parse_unit_lenient",
    "parse_units",
    "parse_units_lenient",
    "print_unit",
    "print_units",
    "simulate",
    "step_atomic",
]
