"""Command-line client for the toolkit.

The CLI talks to the service API: in-process by default (no sockets, no
network), or to a remote instance via --server.  Subcommands never touch
the network unless an HTTP backend or --server is configured explicitly.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx


class CliError(click.ClickException):
    exit_code = 1


class _InProcessTransport(httpx.BaseTransport):
    """Synchronous bridge onto the ASGI app: no sockets, no network."""

    def __init__(self, app):
        self._transport = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def call():
            response = await self._transport.handle_async_request(request)
            body = await response.aread()
            return httpx.Response(response.status_code, headers=response.headers, content=body)

        return asyncio.run(call())


class ServiceClient:
    """Thin JSON client; in-process ASGI transport unless a server is given."""

    def __init__(self, server: str | None = None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            from .service.app import create_app

            transport = _InProcessTransport(create_app())
            self._client = httpx.Client(transport=transport, base_url="http://xlang.internal", timeout=600.0)

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail")
            except Exception:
                detail = response.text
            raise CliError(f"{path}: {detail}")
        return response.json()


def _collect_x_files(paths: tuple[str, ...]) -> list[dict]:
    files = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            found = sorted(p.glob("*.x"))
            if not found:
                raise CliError(f"{p}: no .x files")
            files.extend(found)
        elif p.is_file():
            files.append(p)
        else:
            raise CliError(f"{raw}: no such file or directory")
    return [{"path": str(p), "text": p.read_text(encoding="utf-8")} for p in files]


def _load_json(path: str | None, what: str):
    if path is None:
        return None
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read {what} {path}: {exc}")


_CONFIG_SECTIONS = {"pipeline", "penalties", "weights", "simulation"}


def _load_config(path: str | None) -> dict:
    config = _load_json(path, "config") or {}
    unknown = set(config) - _CONFIG_SECTIONS
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)} (allowed: {sorted(_CONFIG_SECTIONS)})")
    return config


def _print_diagnostics(diagnostics: list[dict]):
    for diag in diagnostics:
        span = diag.get("span")
        where = f"{span['file']}:{span['start_line']}:{span['start_col']}: " if span else ""
        click.echo(f"{where}{diag['severity']}[{diag['code']}]: {diag['message']}", err=True)


def _has_errors(diagnostics: list[dict]) -> bool:
    return any(d["severity"] == "error" for d in diagnostics)


@click.group()
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
@click.option("--json", "json_output", is_flag=True, help="Machine-readable output.")
@click.option("--config", "config_path", default=None, type=click.Path(), help="Declarative config file.")
@click.option("--seed", default=None, type=int, help="Seed override for seeded subcommands.")
@click.option("--backend", "backend_kind", default=None, help="Generator backend: replay | template-stub | http.")
@click.option(
    "--port-convention",
    default=None,
    type=click.Choice(["dataflow", "paper-literal"]),
    help="Direction convention for extracted ports.",
)
@click.version_option()
@click.pass_context
def main(ctx, server, json_output, config_path, seed, backend_kind, port_convention):
    """Parse, simulate, generate, and score X-language simulation models."""
    ctx.obj = {
        "client": ServiceClient(server),
        "json": json_output,
        "config": _load_config(config_path),
        "seed": seed,
        "backend": backend_kind,
        "port_convention": port_convention,
    }


@main.command()
@click.argument("paths", nargs=-1, required=True)
@click.pass_obj
def check(obj, paths):
    """Parse and link model files; exit 0 iff no errors."""
    result = obj["client"].post("/check", {"files": _collect_x_files(paths)})
    if obj["json"]:
        click.echo(json.dumps(result, sort_keys=True))
    else:
        _print_diagnostics(result["diagnostics"])
        click.echo("ok" if result["ok"] else "errors found", err=True)
    sys.exit(0 if result["ok"] else 1)


@main.command()
@click.argument("paths", nargs=-1, required=True)
@click.option("--top", default=None, help="Top-level couple (default: inferred).")
@click.option("--end-time", default=10.0, type=float, show_default=True)
@click.option("--step", default=1.0, type=float, show_default=True, help="Continuous step size.")
@click.option("--integrator", default="euler", type=click.Choice(["euler", "rk4"]), show_default=True)
@click.option("--output", default=None, type=click.Path(), help="Write the trace to a file.")
@click.option("--format", "fmt", default="tsv", type=click.Choice(["tsv", "json"]), show_default=True)
@click.pass_obj
def simulate(obj, paths, top, end_time, step, integrator, output, fmt):
    """Simulate a linked model set and emit its trace."""
    payload = {
        "files": _collect_x_files(paths),
        "top": top,
        "end_time": end_time,
        "continuous_step": step,
        "integrator": integrator,
        "seed": obj["seed"] or 0,
    }
    result = obj["client"].post("/simulate", payload)
    if fmt == "json" or obj["json"]:
        text = json.dumps({"events": result["events"]}, sort_keys=True) + "\n"
    else:
        text = result["tsv"]
    if output:
        Path(output).write_text(text, encoding="utf-8")
        click.echo(f"wrote {output}", err=True)
    else:
        click.echo(text, nl=False)


@main.command()
@click.argument("document", type=click.Path(exists=True))
@click.option("--edits", default=None, type=click.Path(exists=True), help="Manual-review edit file (JSON).")
@click.option("--out", default=None, type=click.Path(), help="Write composition/slices JSON here.")
@click.pass_obj
def extract(obj, document, edits, out):
    """Extract the system composition and corpus slices from a document."""
    payload = {
        "document": Path(document).read_text(encoding="utf-8"),
        "edits": _load_json(edits, "edits"),
    }
    pipeline_cfg = obj["config"].get("pipeline", {})
    if pipeline_cfg.get("guards"):
        payload["guards"] = pipeline_cfg["guards"]
    result = obj["client"].post("/extract", payload)
    _print_diagnostics(result["diagnostics"])
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "composition.json").write_text(
            json.dumps(result["composition"], indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (out_dir / "slices.json").write_text(
            json.dumps(result["slices"], indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        click.echo(f"wrote {out_dir}/composition.json and slices.json", err=True)
    if obj["json"] or not out:
        click.echo(json.dumps(result["composition"], sort_keys=True))
    sys.exit(1 if _has_errors(result["diagnostics"]) else 0)


@main.command()
@click.argument("document", type=click.Path(exists=True))
@click.option("--out", default="generated", type=click.Path(), show_default=True, help="Output directory.")
@click.option("--replay-dir", default=None, type=click.Path(), help="Replay fixture directory.")
@click.option("--endpoint", default=None, help="HTTP backend endpoint.")
@click.option("--api-key-env", default=None, help="Environment variable holding the backend key.")
@click.option("--model", default=None, help="HTTP backend model identifier.")
@click.option("--edits", default=None, type=click.Path(exists=True))
@click.pass_obj
def pipeline(obj, document, out, replay_dir, endpoint, api_key_env, model, edits):
    """Run document -> models generation end to end and write the files."""
    config = dict(obj["config"].get("pipeline", {}))
    if obj["seed"] is not None:
        config["seed"] = obj["seed"]
    if obj["port_convention"]:
        config["convention"] = obj["port_convention"]
    backend = {"kind": obj["backend"] or "template-stub"}
    if replay_dir:
        backend["kind"] = obj["backend"] or "replay"
        backend["replay"] = {
            p.stem: p.read_text(encoding="utf-8") for p in sorted(Path(replay_dir).glob("*.txt"))
        }
    if endpoint:
        backend.update({"kind": "http", "endpoint": endpoint, "api_key_env": api_key_env, "model": model})
    payload = {
        "document": Path(document).read_text(encoding="utf-8"),
        "config": config,
        "backend": backend,
        "edits": _load_json(edits, "edits"),
    }
    result = obj["client"].post("/pipeline", payload)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for entry in result["files"]:
        (out_dir / entry["path"]).write_text(entry["text"], encoding="utf-8")
    _print_diagnostics(result["diagnostics"])
    click.echo(f"wrote {len(result['files'])} files to {out_dir}", err=True)
    if obj["json"]:
        click.echo(json.dumps(result["manifest"], sort_keys=True))
    sys.exit(0 if result["ok"] else 1)


@main.command()
@click.argument("paths", nargs=-1, required=True)
@click.option("--out", default=None, type=click.Path(), help="Write JSONL here (default: stdout).")
@click.pass_obj
def dataset(obj, paths, out):
    """Build the mask-completion dataset from atomic units."""
    payload = {"files": _collect_x_files(paths), "seed": obj["seed"] or 0}
    result = obj["client"].post("/dataset", payload)
    if out:
        Path(out).write_text(result["jsonl"], encoding="utf-8")
        click.echo(f"wrote {len(result['samples'])} samples to {out}", err=True)
    else:
        click.echo(result["jsonl"], nl=False)


@main.command()
@click.argument("model_dir", type=click.Path(exists=True))
@click.argument("reference_dir", type=click.Path(exists=True))
@click.option("--annotations", default=None, type=click.Path(exists=True), help="Manual logic-error counts (JSON).")
@click.option("--weights-source", default="explicit", type=click.Choice(["explicit", "ewm"]), show_default=True)
@click.option("--batch", is_flag=True, help="Treat MODEL_DIR's subdirectories as a batch of sets.")
@click.option("--end-time", default=20.0, type=float, show_default=True)
@click.option("--step", default=1.0, type=float, show_default=True)
@click.option("--trace-tol", default=0.0, type=float, show_default=True)
@click.option("--out", default=None, type=click.Path(), help="Write the report JSON here.")
@click.pass_obj
def evaluate(obj, model_dir, reference_dir, annotations, weights_source, batch, end_time, step, trace_tol, out):
    """Score a generated model set against the reference fixture."""
    payload: dict = {
        "reference": _collect_x_files((reference_dir,)),
        "annotations": _load_json(annotations, "annotations"),
        "weights_source": weights_source,
        "end_time": end_time,
        "continuous_step": step,
        "trace_tol": trace_tol,
    }
    if obj["config"].get("penalties"):
        payload["penalties"] = obj["config"]["penalties"]
    if obj["config"].get("weights"):
        payload["weights"] = obj["config"]["weights"]
    if batch:
        sets = {}
        for sub in sorted(Path(model_dir).iterdir()):
            if sub.is_dir() and list(sub.glob("*.x")):
                sets[sub.name] = _collect_x_files((str(sub),))
        if not sets:
            raise CliError(f"{model_dir}: no model-set subdirectories")
        payload["batch"] = sets
    else:
        payload["models"] = _collect_x_files((model_dir,))
    result = obj["client"].post("/evaluate", payload)
    _print_diagnostics(result.get("diagnostics", []))
    if out:
        Path(out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        click.echo(f"wrote {out}", err=True)
    if obj["json"]:
        click.echo(json.dumps(result, sort_keys=True))
    elif batch:
        for name, report in sorted((result.get("reports") or {}).items()):
            click.echo(f"{name}\t{report['score']:.6f}")
    else:
        click.echo(result["table"], nl=False)
        click.echo(f"score: {result['score']:.6f}")


@main.command()
@click.argument("report_file", type=click.Path(exists=True))
@click.pass_obj
def report(obj, report_file):
    """Render an evaluation report JSON as a flat table."""
    data = _load_json(report_file, "report")
    if data is None:
        raise CliError(f"{report_file}: empty report")
    if "report" in data and isinstance(data["report"], dict):
        data = data["report"]
    result = obj["client"].post("/report", {"report": data})
    click.echo(result["table"], nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Run the service with uvicorn."""
    import uvicorn

    uvicorn.run("xlang.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
