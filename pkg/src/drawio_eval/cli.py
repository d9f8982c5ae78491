"""Command-line interface.

Exit codes: 0 on success, 1 when evaluation-level failures occurred,
2 on usage or configuration errors.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import harness, metrics, report as report_mod
from .config import ConfigError, load_config
from .judge import TestEmbedder
from .model import MissingModelError, XmlSyntaxError, parse_document
from .patch import (
    AmbiguousExactError,
    EmptyPatchError,
    JsonSyntaxError,
    NoMatchError,
    SchemaViolationError,
    apply_patch,
    parse_patch,
)
from .render import CyclicParentError, render_svg
from .validate import validate_document

EXIT_OK = 0
EXIT_EVAL_FAILURE = 1
EXIT_USAGE = 2


class Cli(click.Group):
    def main(self, *args, **kwargs):
        # click's own usage errors already exit 2; normalize our config
        # errors the same way.
        kwargs.setdefault("standalone_mode", False)
        try:
            result = super().main(*args, **kwargs)
            return sys.exit(result if isinstance(result, int) else EXIT_OK)
        except click.UsageError as exc:
            click.echo(f"error: {exc.format_message()}", err=True)
            sys.exit(EXIT_USAGE)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_USAGE)
        except click.exceptions.Abort:
            sys.exit(EXIT_USAGE)


@click.group(cls=Cli)
def main():
    """Evaluation toolkit for Draw.io/mxGraph diagram generation and editing."""


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def validate(file: str):
    """Parse FILE and report schema diagnostics."""
    text = Path(file).read_text("utf-8")
    try:
        doc = parse_document(text)
    except (XmlSyntaxError, MissingModelError) as exc:
        click.echo(f"invalid: {exc}", err=True)
        return EXIT_EVAL_FAILURE
    result = validate_document(doc)
    for diag in result.diagnostics:
        stream_err = diag.severity == "error"
        click.echo(f"{diag.severity}: {diag.code} {diag.message}", err=stream_err)
    if result.valid:
        click.echo("valid")
        return EXIT_OK
    click.echo("invalid")
    return EXIT_EVAL_FAILURE


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", "output", required=True, type=click.Path(dir_okay=False))
def render(file: str, output: str):
    """Render FILE to an SVG at the path given by -o."""
    text = Path(file).read_text("utf-8")
    try:
        doc = parse_document(text)
        svg = render_svg(doc)
    except (XmlSyntaxError, MissingModelError, CyclicParentError) as exc:
        click.echo(f"render failed: {exc}", err=True)
        return EXIT_EVAL_FAILURE
    Path(output).write_text(svg, "utf-8")
    click.echo(output)
    return EXIT_OK


@main.group()
def patch():
    """Fragment patch operations."""


@patch.command("apply")
@click.option("--xml", "xml_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--patch", "patch_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", "output", type=click.Path(dir_okay=False))
def patch_apply(xml_file: str, patch_file: str, output: str | None):
    """Apply a JSON fragment patch to an XML document."""
    xml_text = Path(xml_file).read_text("utf-8")
    patch_text = Path(patch_file).read_text("utf-8")
    try:
        parsed = parse_patch(patch_text)
        result = apply_patch(xml_text, parsed)
    except NoMatchError as exc:
        click.echo(f"NoMatch at change {exc.change_index}: {exc}", err=True)
        return EXIT_EVAL_FAILURE
    except AmbiguousExactError as exc:
        click.echo(f"AmbiguousExact at change {exc.change_index}: {exc}", err=True)
        return EXIT_EVAL_FAILURE
    except (JsonSyntaxError, SchemaViolationError, EmptyPatchError) as exc:
        click.echo(f"bad patch: {exc}", err=True)
        return EXIT_USAGE
    if output:
        Path(output).write_text(result.result_text, "utf-8")
        click.echo(output)
    else:
        click.echo(result.result_text)
    return EXIT_OK


@main.group(name="metrics")
def metrics_group():
    """Standalone metric computations."""


@metrics_group.command()
@click.argument("a", type=click.Path(exists=True, dir_okay=False))
@click.argument("b", type=click.Path(exists=True, dir_okay=False))
def xed(a: str, b: str):
    """Character edit distance between files A and B."""
    click.echo(metrics.xed(Path(a).read_text("utf-8"), Path(b).read_text("utf-8")))
    return EXIT_OK


@metrics_group.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False))
def xtc(file: str, vocab_path: str | None):
    """Token count of FILE (vocab tokenizer when --vocab is given)."""
    tokenizer = (
        metrics.VocabTokenizer(vocab_path) if vocab_path else metrics.FallbackTokenizer()
    )
    click.echo(metrics.xtc(Path(file).read_text("utf-8"), tokenizer))
    return EXIT_OK


def _eval_options(fn):
    fn = click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))(fn)
    fn = click.option("--candidates", required=True, type=click.Path(exists=True, file_okay=False))(fn)
    fn = click.option("--judge", "judge_backend", type=click.Choice(["mock", "http"]), default="mock")(fn)
    fn = click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False))(fn)
    fn = click.option("-o", "--output", "output", type=click.Path(dir_okay=False), default="report.json")(fn)
    return fn


def _run_eval(task: str, dataset: str, candidates: str, judge_backend: str, config_file, output: str):
    try:
        config = load_config(config_file, judge=judge_backend)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_USAGE
    runner = harness.run_task1 if task == "task1" else harness.run_task2
    try:
        run_report = runner(dataset, candidates, config)
    except (harness.EmptyDatasetError, harness.UnreadableRootError) as exc:
        click.echo(f"dataset error: {exc}", err=True)
        return EXIT_USAGE
    harness.write_report(run_report, output)
    click.echo(output)
    failures = sum(
        1
        for record in run_report.records
        if record.metrics.esr == 0
        or any(d.startswith(("LOAD_FAILED", "CANDIDATE_MISSING", "PATCH_MISSING")) for d in record.diagnostics)
    )
    return EXIT_EVAL_FAILURE if failures else EXIT_OK


@main.group(name="eval")
def eval_group():
    """Run a full evaluation over a dataset and candidate outputs."""


@eval_group.command()
@_eval_options
def task1(dataset, candidates, judge_backend, config_file, output):
    """Score generated diagrams against the dataset."""
    return _run_eval("task1", dataset, candidates, judge_backend, config_file, output)


@eval_group.command()
@_eval_options
def task2(dataset, candidates, judge_backend, config_file, output):
    """Score fragment patches against the dataset instructions."""
    return _run_eval("task2", dataset, candidates, judge_backend, config_file, output)


@main.group(name="report")
def report_group():
    """Report post-processing."""


@report_group.command()
@click.argument("report_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False))
def summarize(report_file: str, out_dir: str | None):
    """Print aggregate tables and write CSV plus chart PNGs."""
    try:
        result = report_mod.summarize(report_file, out_dir)
    except report_mod.BadReportError as exc:
        click.echo(f"bad report: {exc}", err=True)
        return EXIT_USAGE
    click.echo(result["text"])
    return EXIT_OK


@main.command(name="filter")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--min-similarity", type=float, default=0.85, show_default=True)
def filter_cmd(dataset: str, min_similarity: float):
    """Dataset-construction helper: list samples whose rendered geometry is
    at least MIN-SIMILARITY cosine-similar to itself round-tripped.

    This mirrors the corpus similarity filter; it is never applied during
    evaluation runs.
    """
    embedder = TestEmbedder()
    kept = []
    dropped = []
    for sample in harness.load_dataset(dataset):
        if sample.load_error or sample.ground_truth_xml is None:
            dropped.append((sample.sample_id, "load-failed"))
            continue
        try:
            from .model import serialize_document

            doc = parse_document(sample.ground_truth_xml)
            value = metrics.cosine_similarity(
                embedder.embed(sample.ground_truth_xml),
                embedder.embed(serialize_document(doc)),
            )
        except ValueError as exc:
            dropped.append((sample.sample_id, str(exc)))
            continue
        if value >= min_similarity:
            kept.append(sample.sample_id)
        else:
            dropped.append((sample.sample_id, f"similarity {value:.4f}"))
    for sample_id in kept:
        click.echo(sample_id)
    for sample_id, reason in dropped:
        click.echo(f"dropped {sample_id}: {reason}", err=True)
    return EXIT_OK


if __name__ == "__main__":
    main()
