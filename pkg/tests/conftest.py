"""Shared fixtures: the aircraft fixture backend, pipeline config, and
reference model set."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from xlang.backends import ScriptedBackend
from xlang.docpipe import DEFAULT_GUARDS
from xlang.kernel import SimulationConfig
from xlang.pipeline import PipelineConfig, run_pipeline
from xlang.prompts import Label

FIXTURES = Path(__file__).parent / "fixtures"
AIRCRAFT = FIXTURES / "aircraft"
ANSWERS = AIRCRAFT / "answers"
REFERENCE = AIRCRAFT / "reference"
CORPUS = FIXTURES / "corpus"


def _answer(name: str) -> str:
    return (ANSWERS / f"{name}.txt").read_text(encoding="utf-8")


def make_aircraft_backend() -> ScriptedBackend:
    """Answers keyed off the bundle contents: connection inference, one
    value+state/value+equation answer per unit, and the clamp function."""

    def is_connection_prompt(bundle):
        task = bundle.message(Label.TASK)
        return task is not None and "connection relationships" in task.content

    def wants_unit(name):
        def predicate(bundle):
            code = bundle.message(Label.GENERATED_CODE)
            return code is not None and f" {name}\n" in code.content.splitlines()[0] + "\n"

        return predicate

    def is_function_prompt(symbol):
        def predicate(bundle):
            task = bundle.message(Label.TASK)
            return task is not None and f"named `{symbol}`" in task.content

        return predicate

    rules = [(is_connection_prompt, _answer("connections"))]
    for unit in ("Battery", "Control", "BallisticSceneControl", "Radar", "AutoPilot", "Thrust"):
        rules.append((wants_unit(unit), _answer(unit)))
    rules.append((is_function_prompt("clamp"), _answer("clamp")))
    return ScriptedBackend(rules)


def aircraft_pipeline_config() -> PipelineConfig:
    raw = json.loads((AIRCRAFT / "pipeline_config.json").read_text(encoding="utf-8"))["pipeline"]
    return PipelineConfig(
        components=raw["components"],
        repair_budget=raw.get("repair_budget", 3),
        seed=raw.get("seed", 0),
        guards=tuple(raw.get("guards", DEFAULT_GUARDS)),
    )


@pytest.fixture(scope="session")
def aircraft_document() -> str:
    return (AIRCRAFT / "design_doc.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def aircraft_ground_truth() -> dict:
    return json.loads((AIRCRAFT / "ground_truth.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def aircraft_pipeline_result(aircraft_document):
    """One canonical pipeline run with the scripted fixture backend."""
    result = run_pipeline(aircraft_document, aircraft_pipeline_config(), make_aircraft_backend())
    assert result.ok, [str(d) for d in result.diagnostics]
    return result


@pytest.fixture(scope="session")
def reference_files() -> list[tuple[str, str]]:
    files = sorted(REFERENCE.glob("*.x"))
    assert files, "reference fixture missing"
    return [(f.name, f.read_text(encoding="utf-8")) for f in files]


@pytest.fixture(scope="session")
def reference_sim_config() -> SimulationConfig:
    return SimulationConfig(end_time=20.0, continuous_step=1.0)


@pytest.fixture(scope="session")
def aircraft_reference(reference_files, reference_sim_config):
    from xlang.evaluation import prepare_reference

    return prepare_reference([text for _, text in reference_files], reference_sim_config)


@pytest.fixture(scope="session")
def corpus_units():
    from xlang.parser import parse_units

    units = []
    for path in sorted(CORPUS.glob("*.x")):
        units.extend(parse_units(path.read_text(encoding="utf-8"), file=str(path)))
    return units
