"""Command-line entry point: one subcommand per pipeline stage or experiment.

Errors are reported as a JSON object on stderr with a distinct exit code per
failure class (see ``EXIT_CODES``).
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .backends import BackendError
from .config import ConfigError, load_config
from .evaluation.encoders import TrainingError as EncoderTrainingError
from .evaluation.tasks import SplitError
from .graph import GraphError
from .intentions import SessionFormatError
from .itemgraph import ItemGraphError
from .pipeline import BackendFailure, MissingInputError, Pipeline, StageDependencyError, run_dir, write_report
from .rec.train import TrainingError as RecTrainingError

EXIT_CODES = {
    "internal": 1,
    "usage": 2,
    "config": 3,
    "missing_input": 4,
    "dependency": 5,
    "schema": 6,
    "backend": 7,
    "training": 8,
}

_ERROR_CLASSES = (
    (ConfigError, "config"),
    (MissingInputError, "missing_input"),
    (StageDependencyError, "dependency"),
    ((GraphError, ItemGraphError, SessionFormatError, SplitError), "schema"),
    ((BackendFailure, BackendError), "backend"),
    ((RecTrainingError, EncoderTrainingError), "training"),
)


def classify_error(exc: BaseException) -> str:
    for types, name in _ERROR_CLASSES:
        if isinstance(exc, types):
            return name
    return "internal"


def _fail(command: str, exc: BaseException) -> None:
    kind = classify_error(exc)
    report = {"command": command, "error": kind, "type": type(exc).__name__, "message": str(exc),
              "exit_code": EXIT_CODES[kind]}
    click.echo(json.dumps(report, sort_keys=True), err=True)
    sys.exit(EXIT_CODES[kind])


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="YAML pipeline config; defaults apply when omitted.")
@click.option("--seed", type=int, default=None, help="Replace every named seed in the config.")
@click.option("--run-dir", type=click.Path(file_okay=False), default=None,
              help="Report directory (default: <reports>/<timestamp>-<config hash>).")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx, config_path, seed, run_dir, verbose):
    """Build an intention graph from session logs and evaluate it."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, run_dir=run_dir)


def _execute(ctx, command: str, **kwargs) -> None:
    try:
        config, base = load_config(ctx.obj["config_path"])
        if ctx.obj["seed"] is not None:
            config = config.with_seed(ctx.obj["seed"])
        pipe = Pipeline(config, base)
        payload = pipe.run(command, **kwargs)
        directory = Path(ctx.obj["run_dir"]) if ctx.obj["run_dir"] else run_dir(pipe.path(config.paths.reports), config)
        path = write_report(directory, command, config, payload)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a machine-readable report
        _fail(command, exc)
        return
    click.echo(json.dumps({"command": command, "report": str(path), "result": payload["result"]}, sort_keys=True))


def _stage(name: str, help_text: str):
    @click.pass_context
    def cmd(ctx):
        _execute(ctx, name)

    cmd.__doc__ = help_text
    main.command(name)(cmd)


for _name, _help in (
    ("synth", "Write a synthetic sessions file and its ground-truth manifest."),
    ("ingest", "Load the sessions file into a graph of items and sessions."),
    ("gen-intentions", "Generate session intentions with the configured generator."),
    ("conceptualize", "Abstract every intention into concept phrases."),
    ("classify-relations", "Score relation assertions between candidate intention pairs."),
    ("select-pairs", "Select session pairs by meta-path count or concept reachability."),
    ("eval-intention", "Intention prediction ranking task."),
    ("eval-concept", "Concept prediction ranking task."),
    ("eval-recovery", "Product recovery ranking task with the trained scorer."),
    ("train-rec", "Train the recommender on the item graph."),
    ("eval-rec", "Evaluate the saved recommender on the test sessions."),
    ("ablate", "Train and test every item-graph ablation variant."),
    ("diversity", "n-gram diversity of the generated intentions."),
):
    _stage(_name, _help)


@main.command("build-itemgraph")
@click.option("--variant", type=click.Choice(["Full", "ConceptOnly", "RelationOnly", "Empty"]), default="Full")
@click.pass_context
def build_itemgraph(ctx, variant):
    """Distill the weighted item graph from the selected session pairs."""
    _execute(ctx, "build-itemgraph", variant=variant)


@main.command("init-config")
@click.argument("path", type=click.Path(dir_okay=False))
def init_config(path):
    """Write the default configuration to PATH."""
    from .config import PipelineConfig, dump_config

    Path(path).write_text(dump_config(PipelineConfig()), encoding="utf-8")
    click.echo(path)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.pass_context
def serve(ctx, host, port):
    """Serve the configured local backends over HTTP (/generate, /score, /embed)."""
    import uvicorn

    from .server import create_app

    try:
        config, base = load_config(ctx.obj["config_path"])
        pipe = Pipeline(config, base)
        b = config.backends
        if b.generator.kind != "mock" or b.scorer.kind != "mock" or b.embedder.kind != "hash":
            raise ConfigError("serve exposes local backends only; set generator/scorer to mock and embedder to hash")
        app = create_app(pipe.generator(), pipe.scorer(), pipe.embedder())
    except Exception as exc:  # noqa: BLE001
        _fail("serve", exc)
        return
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
