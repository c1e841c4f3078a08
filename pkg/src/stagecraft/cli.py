"""Command-line entry points; thin clients over the engine and the service."""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import click

from .errors import StagecraftError
from .protocol_io import parse_protocol, parse_stage_graph, stage_graph_to_object
from .speed import estimate
from .synthesis import synthesize


@click.group()
def main():
    """Stage-graph workbench for population protocols."""


@main.command()
@click.option("--port", default=8000, show_default=True, help="TCP port to bind.")
@click.option("--host", default="127.0.0.1", show_default=True, help="Interface to bind.")
@click.option(
    "--protocols", "protocol_dir", type=click.Path(exists=True, file_okay=False),
    default=None, help="Directory of extra protocol JSON files to load at startup.",
)
def serve(port: int, host: str, protocol_dir: str | None):
    """Run the HTTP service with the bundled examples loaded."""
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(protocol_dir), host=host, port=port)


@main.command(name="synthesize")
@click.argument("protocol_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--n-cert", default=7, show_default=True,
              help="Population-size bound for exhaustive certificate checking.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
              show_default=True, help="Directory for the emitted documents.")
def synthesize_command(protocol_file: str, n_cert: int, out_dir: str):
    """Synthesize and check both stage graphs of a protocol.

    Writes stage_graph_0.json, stage_graph_1.json, and report.json; prints a
    one-line outcome summary.
    """
    try:
        doc = parse_protocol(Path(protocol_file).read_bytes())
        result = synthesize(doc.protocol, n_cert=n_cert)
    except StagecraftError as exc:
        raise click.ClickException(f"{exc.code}: {exc.message}") from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for graph in result.graphs:
        path = out / f"stage_graph_{graph.output_value}.json"
        path.write_text(
            json.dumps(stage_graph_to_object(graph), indent=2) + "\n", encoding="utf-8"
        )
    report = {
        "protocol": doc.name,
        "outcome": result.outcome,
        "reports": [r.to_json() for r in result.reports],
        "run": None
        if result.run is None
        else [
            {"config": c.to_dict(), "transition": t.name if t else None}
            for c, t in result.run
        ],
        "reason": result.reason,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    click.echo(f"{doc.name}: {result.outcome}")
    if result.run:
        steps = " -> ".join(repr(c) for c, _ in result.run)
        click.echo(f"counterexample: {steps}")


@main.command(name="speed")
@click.argument("protocol_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("graph_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--sizes", default="4,8,16", show_default=True,
              help="Comma-separated population sizes.")
@click.option("--trials", default=200, show_default=True, help="Trials per size.")
@click.option("--stage", "stage_id", default=None,
              help="Stage to measure (default: the graph's first non-terminal stage).")
@click.option("--seed", default=0, show_default=True, help="RNG seed.")
@click.option("--step-cap", default=10**7, show_default=True,
              help="Per-trial interaction cap; capped trials are censored.")
def speed_command(
    protocol_file: str, graph_file: str, sizes: str, trials: int,
    stage_id: str | None, seed: int, step_cap: int,
):
    """Estimate expected interactions until a stage drains into a child.

    Prints CSV rows n,mean,trials,censored; skipped sizes (no stage member of
    that exact size) are reported on stderr.
    """
    try:
        doc = parse_protocol(Path(protocol_file).read_bytes())
        graph = parse_stage_graph(Path(graph_file).read_bytes(), doc.protocol)
        size_list = [int(s) for s in sizes.split(",") if s.strip()]
        stage = None
        if stage_id is None:
            stage = next((s for s in graph.stages if not s.terminal), None)
        else:
            stage = graph.stage(stage_id)
        if stage is None or stage.terminal:
            raise click.ClickException("the selected stage is terminal; nothing to measure")
        result = estimate(
            doc.protocol, stage, graph.children_of(stage.id), size_list,
            trials, random.Random(seed), step_cap,
        )
    except StagecraftError as exc:
        raise click.ClickException(f"{exc.code}: {exc.message}") from exc
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo("n,mean,trials,censored")
    for n, mean, t, censored in result.rows():
        click.echo(f"{n},{mean},{t},{censored}")
    for n in result.skipped_sizes:
        click.echo(f"size {n} skipped: no stage member with exactly {n} agents", err=True)
    if result.slope is not None:
        click.echo(f"log-log slope: {result.slope:.3f}", err=True)


if __name__ == "__main__":
    main()
