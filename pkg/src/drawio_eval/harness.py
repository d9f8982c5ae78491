"""Dataset ingestion, Task 1 / Task 2 orchestration, and report assembly.

The systems under evaluation are external; this module consumes their
outputs from disk, scores them, and writes a single JSON report with
``meta``, ``records``, and ``aggregates`` sections. With the mock judge
and test embedder the report is byte-identical across runs.
"""
from __future__ import annotations

import json
import logging
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import judge as judge_mod
from . import metrics as metrics_mod
from .config import EvalConfig
from .model import parse_document
from .patch import (
    AmbiguousExactError,
    EmptyPatchError,
    JsonSyntaxError,
    NoMatchError,
    SchemaViolationError,
    apply_patch,
    classify_changes,
    parse_patch,
)
from .render import render_svg

__all__ = [
    "SampleRecord",
    "SampleResult",
    "Report",
    "EmptyDatasetError",
    "UnreadableRootError",
    "EmptyRecordsError",
    "MissingCandidateError",
    "MissingPatchError",
    "BadInstructionIndexError",
    "ReportGatingError",
    "load_dataset",
    "evaluate_task1_sample",
    "evaluate_task2_sample",
    "aggregate",
    "run_task1",
    "run_task2",
    "lint_report",
    "write_report",
]

log = logging.getLogger(__name__)

GATED_SCORES = ("scs", "codexqa", "xdrfr", "visual_similarity")


class EmptyDatasetError(ValueError):
    pass


class UnreadableRootError(ValueError):
    pass


class EmptyRecordsError(ValueError):
    pass


class MissingCandidateError(ValueError):
    pass


class MissingPatchError(ValueError):
    pass


class BadInstructionIndexError(ValueError):
    pass


class ReportGatingError(ValueError):
    pass


@dataclass
class SampleRecord:
    sample_id: str
    domain: str
    sub_domain: str = ""
    ground_truth_xml: Optional[str] = None
    original_image: Optional[str] = None
    caption: Optional[dict] = None
    questions: Optional[list[dict]] = None
    instructions: Optional[list[dict]] = None
    load_error: Optional[str] = None


@dataclass
class SampleResult:
    """One evaluated candidate: a metric record plus identity and the
    diagnostics accumulated while scoring it."""

    sample_id: str
    domain: str
    metrics: metrics_mod.MetricRecord
    instruction_index: Optional[int] = None
    diagnostics: list[str] = field(default_factory=list)

    @property
    def sort_key(self) -> tuple:
        return (self.sample_id, -1 if self.instruction_index is None else self.instruction_index)


@dataclass
class Report:
    meta: dict
    records: list[SampleResult]
    aggregates: dict


def _read_json(path: Path):
    return json.loads(path.read_text("utf-8"))


def load_dataset(root: str) -> list[SampleRecord]:
    """One SampleRecord per ``<root>/<domain>/<sample_id>`` directory.

    Missing optional files leave the fields absent; a malformed mandatory
    file flags that sample as load-failed rather than aborting the run.
    """
    root_path = Path(root)
    if not root_path.is_dir():
        raise UnreadableRootError(f"not a readable directory: {root}")
    records: list[SampleRecord] = []
    for domain_dir in sorted(p for p in root_path.iterdir() if p.is_dir()):
        for sample_dir in sorted(p for p in domain_dir.iterdir() if p.is_dir()):
            record = SampleRecord(sample_id=sample_dir.name, domain=domain_dir.name)
            gt_path = sample_dir / "ground_truth.xml"
            if not gt_path.exists():
                record.load_error = "ground_truth.xml missing"
                records.append(record)
                continue
            try:
                record.ground_truth_xml = gt_path.read_text("utf-8")
                parse_document(record.ground_truth_xml)
            except (OSError, ValueError) as exc:
                record.load_error = f"ground_truth.xml unusable: {exc}"
                records.append(record)
                continue
            image = sample_dir / "original.png"
            if image.exists():
                record.original_image = str(image)
            for name, attr in (
                ("caption.json", "caption"),
                ("questions.json", "questions"),
                ("instructions.json", "instructions"),
            ):
                path = sample_dir / name
                if not path.exists():
                    continue
                try:
                    setattr(record, attr, _read_json(path))
                except (OSError, json.JSONDecodeError) as exc:
                    record.load_error = f"{name} unusable: {exc}"
                    break
            if record.caption and not record.sub_domain:
                record.sub_domain = str(record.caption.get("sub_domain", ""))
            records.append(record)
    if not records:
        raise EmptyDatasetError(f"no samples under {root}")
    return records


def _zero_gated(record: metrics_mod.MetricRecord) -> metrics_mod.MetricRecord:
    record.scs = 0.0
    record.codexqa = 0.0
    record.xdrfr = 0.0 if record.xdrfr is not None else None
    record.visual_similarity = 0.0
    return record


def _score_scs(
    kind: str,
    original_image: str,
    candidate_image: str,
    backend,
    result: SampleResult,
    *,
    cache=None,
) -> Optional[float]:
    prompt = judge_mod.build_scs_prompt(kind, original_image, candidate_image)
    try:
        response = judge_mod.run_judge(
            backend, prompt, lambda raw: judge_mod.parse_scs_response(raw, kind), cache=cache
        )
    except judge_mod.ResponseError as exc:
        result.diagnostics.append(f"SCS_JUDGE_FAILED: {exc}")
        return 0.0
    _, final = response.parsed
    return final


def _score_codexqa(sample: SampleRecord, candidate_xml: str, backend, result, *, cache=None):
    questions = [str(q.get("question", "")) for q in sample.questions]
    prompt = judge_mod.build_codexqa_prompt(candidate_xml, questions)
    try:
        response = judge_mod.run_judge(
            backend,
            prompt,
            lambda raw: judge_mod.parse_codexqa_response(raw, len(questions)),
            cache=cache,
        )
    except judge_mod.ResponseError as exc:
        result.diagnostics.append(f"CODEXQA_JUDGE_FAILED: {exc}")
        return 0.0
    answers = response.parsed
    outcomes = []
    for i, q in enumerate(sample.questions, start=1):
        strategy = metrics_mod.STRATEGY_BY_QUESTION_TYPE.get(
            str(q.get("type", "identification")), "semantic-normalized"
        )
        outcomes.append(
            metrics_mod.codexqa_match(answers[f"Q{i}"], str(q.get("answer", "")), strategy)
        )
    return metrics_mod.round_half_up(metrics_mod.codexqa_accuracy(outcomes), 4)


def _make_tokenizer(config: EvalConfig):
    if config.tokenizer == "vocab":
        return metrics_mod.VocabTokenizer(config.tokenizer_vocab_path)
    return metrics_mod.FallbackTokenizer()


def _similarity(reference_source, candidate_source, embedder, result: SampleResult) -> float:
    try:
        ref_vec = embedder.embed(reference_source)
        cand_vec = embedder.embed(candidate_source)
        return metrics_mod.round_half_up(metrics_mod.cosine_similarity(ref_vec, cand_vec), 4)
    except (ValueError, judge_mod.BackendUnavailableError) as exc:
        result.diagnostics.append(f"SIMILARITY_FAILED: {exc}")
        return 0.0


def evaluate_task1_sample(
    sample: SampleRecord,
    candidate_xml: Optional[str],
    backends: dict,
    config: EvalConfig,
) -> SampleResult:
    """Generation scoring: execution gate, then judge and embedder metrics.

    Difficulty is classified from the ground truth's token count so failed
    candidates still land in the right difficulty group.
    """
    if candidate_xml is None:
        raise MissingCandidateError(sample.sample_id)
    tokenizer = backends.get("tokenizer") or _make_tokenizer(config)
    record = metrics_mod.MetricRecord(esr=metrics_mod.esr(candidate_xml))
    result = SampleResult(sample.sample_id, sample.domain, record)
    if sample.ground_truth_xml is not None:
        gt_xtc = metrics_mod.xtc(sample.ground_truth_xml, tokenizer)
        record.difficulty = metrics_mod.classify_difficulty_task1(gt_xtc)
    if record.esr == 0:
        result.diagnostics.append("ESR_ZERO")
        _zero_gated(record)
        record.xdrfr = None
        return result

    record.xtc = metrics_mod.xtc(candidate_xml, tokenizer)
    cand_doc = parse_document(candidate_xml)
    judge = backends["judge"]
    embedder = backends["embedder"]
    cache = backends.get("cache")

    with tempfile.TemporaryDirectory(prefix="drawio-eval-") as tmp:
        cand_svg = Path(tmp) / "candidate.svg"
        cand_svg.write_text(render_svg(cand_doc), "utf-8")
        if sample.original_image:
            record.scs = _score_scs(
                "scs_task1", sample.original_image, str(cand_svg), judge, result, cache=cache
            )
        else:
            result.diagnostics.append("IMAGE_MISSING")
        if isinstance(embedder, judge_mod.TestEmbedder):
            reference, candidate = sample.ground_truth_xml, candidate_xml
        else:
            reference, candidate = sample.original_image, str(cand_svg)
        if reference is not None:
            record.visual_similarity = _similarity(reference, candidate, embedder, result)
        else:
            result.diagnostics.append("IMAGE_MISSING")

    if sample.questions:
        record.codexqa = _score_codexqa(sample, candidate_xml, judge, result, cache=cache)
    else:
        result.diagnostics.append("QUESTIONS_MISSING")
    return result


def _decompose(instruction_entry: dict, judge, result: SampleResult, *, cache=None) -> list[str]:
    cached = instruction_entry.get("questions")
    if cached:
        return [str(q) for q in cached][: judge_mod.MAX_DECOMPOSED_QUESTIONS]
    instruction = str(instruction_entry.get("instruction", ""))
    prompt = judge_mod.build_xdrfr_decompose_prompt(instruction)
    response = judge_mod.run_judge(
        judge,
        prompt,
        lambda raw: judge_mod.parse_decompose_response(raw, instruction),
        cache=cache,
    )
    return list(response.parsed.questions)


def evaluate_task2_sample(
    sample: SampleRecord,
    instruction_index: int,
    patch_json: Optional[str],
    backends: dict,
    config: EvalConfig,
) -> SampleResult:
    """Edit scoring: apply the fragment patch, gate on the patched result,
    then judge style consistency and instruction fulfilment."""
    if patch_json is None:
        raise MissingPatchError(f"{sample.sample_id}/{instruction_index}")
    if not sample.instructions or not 0 <= instruction_index < len(sample.instructions):
        raise BadInstructionIndexError(f"{sample.sample_id}/{instruction_index}")
    entry = sample.instructions[instruction_index]
    record = metrics_mod.MetricRecord(esr=0)
    result = SampleResult(sample.sample_id, sample.domain, record, instruction_index)
    record.difficulty = entry.get("difficulty") or (
        metrics_mod.classify_difficulty_task2(int(entry["atomic_operation_count"]))
        if "atomic_operation_count" in entry
        else None
    )

    try:
        patch = parse_patch(patch_json)
        patched = apply_patch(sample.ground_truth_xml, patch)
    except NoMatchError as exc:
        result.diagnostics.append(f"NO_MATCH at change {exc.change_index}")
        _zero_gated(record)
        return result
    except AmbiguousExactError as exc:
        result.diagnostics.append(f"AMBIGUOUS_EXACT at change {exc.change_index}")
        _zero_gated(record)
        return result
    except (JsonSyntaxError, SchemaViolationError, EmptyPatchError) as exc:
        result.diagnostics.append(f"BAD_PATCH: {exc}")
        _zero_gated(record)
        return result

    record.esr = metrics_mod.esr(patched.result_text)
    record.xed = metrics_mod.xed(sample.ground_truth_xml, patched.result_text)
    if record.esr == 0:
        result.diagnostics.append("ESR_ZERO")
        _zero_gated(record)
        return result

    gt_doc = parse_document(sample.ground_truth_xml)
    patched_doc = parse_document(patched.result_text)
    result.diagnostics.append(f"atomic_operations={len(classify_changes(gt_doc, patched_doc))}")

    judge = backends["judge"]
    cache = backends.get("cache")
    with tempfile.TemporaryDirectory(prefix="drawio-eval-") as tmp:
        before_svg = Path(tmp) / "before.svg"
        after_svg = Path(tmp) / "after.svg"
        before_svg.write_text(render_svg(gt_doc), "utf-8")
        after_svg.write_text(render_svg(patched_doc), "utf-8")
        record.scs = _score_scs(
            "scs_task2", str(before_svg), str(after_svg), judge, result, cache=cache
        )

    instruction = str(entry.get("instruction", ""))
    try:
        questions = _decompose(entry, judge, result, cache=cache)
        prompt = judge_mod.build_xdrfr_verify_prompt(patch_json, instruction, questions, batch=True)
        response = judge_mod.run_judge(
            judge,
            prompt,
            lambda raw: judge_mod.parse_yes_no(raw, len(questions)),
            cache=cache,
        )
        record.xdrfr = metrics_mod.round_half_up(
            metrics_mod.xdrfr_score(response.parsed), 4
        )
    except (judge_mod.ResponseError, judge_mod.PromptError) as exc:
        result.diagnostics.append(f"XDRFR_JUDGE_FAILED: {exc}")
        record.xdrfr = 0.0
    return result


_AGG_METRICS = ("esr", "scs", "codexqa", "xdrfr", "visual_similarity", "xed", "xtc")


def _mean_table(results: Sequence[SampleResult]) -> dict:
    table = {}
    for name in _AGG_METRICS:
        values = [getattr(r.metrics, name) for r in results]
        values = [v for v in values if v is not None]
        if values:
            table[name] = metrics_mod.round_half_up(sum(values) / len(values), 4)
    table["count"] = len(results)
    return table


def aggregate(records: Sequence[SampleResult], grouping: str) -> dict:
    """Mean per metric per group; keys sorted, order-independent."""
    if not records:
        raise EmptyRecordsError("no records to aggregate")
    if grouping == "overall":
        return _mean_table(records)
    if grouping == "by_domain":
        key = lambda r: r.domain
    elif grouping == "by_difficulty":
        key = lambda r: r.metrics.difficulty or "unknown"
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    groups: dict[str, list[SampleResult]] = {}
    for record in sorted(records, key=lambda r: r.sort_key):
        groups.setdefault(key(record), []).append(record)
    return {name: _mean_table(groups[name]) for name in sorted(groups)}


def _build_backends(config: EvalConfig):
    if config.judge == "http":
        judge_backend = judge_mod.HttpJudge(
            config.judge_base_url,
            config.judge_model,
            max_tokens=config.judge_max_tokens,
            concurrency=config.workers,
        )
    else:
        judge_backend = judge_mod.MockJudge()
    if config.embedder == "http":
        embedder = judge_mod.HttpEmbedder(config.embedder_url)
    else:
        embedder = judge_mod.TestEmbedder()
    cache = judge_mod.ResponseCache(config.cache_dir) if config.cache_dir else None
    return {
        "judge": judge_backend,
        "embedder": embedder,
        "tokenizer": _make_tokenizer(config),
        "cache": cache,
    }


def _load_failed_result(sample: SampleRecord) -> SampleResult:
    record = _zero_gated(metrics_mod.MetricRecord(esr=0))
    record.xdrfr = None
    result = SampleResult(sample.sample_id, sample.domain, record)
    result.diagnostics.append(f"LOAD_FAILED: {sample.load_error}")
    return result


def _run_parallel(jobs, workers: int) -> list[SampleResult]:
    if workers <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: job(), jobs))


def run_task1(dataset_root: str, candidates_root: str, config: EvalConfig) -> Report:
    samples = load_dataset(dataset_root)
    backends = _build_backends(config)
    cand_root = Path(candidates_root)
    jobs = []
    immediate: list[SampleResult] = []
    for sample in samples:
        if sample.load_error:
            immediate.append(_load_failed_result(sample))
            continue
        cand_path = cand_root / f"{sample.sample_id}.xml"
        if not cand_path.exists():
            record = _zero_gated(metrics_mod.MetricRecord(esr=0))
            record.xdrfr = None
            failed = SampleResult(sample.sample_id, sample.domain, record)
            failed.diagnostics.append("CANDIDATE_MISSING")
            immediate.append(failed)
            continue
        candidate_xml = cand_path.read_text("utf-8")
        jobs.append(
            lambda s=sample, x=candidate_xml: evaluate_task1_sample(s, x, backends, config)
        )
    results = immediate + _run_parallel(jobs, config.workers)
    return _assemble_report("task1", config, backends, results)


def run_task2(dataset_root: str, candidates_root: str, config: EvalConfig) -> Report:
    samples = load_dataset(dataset_root)
    backends = _build_backends(config)
    cand_root = Path(candidates_root)
    jobs = []
    immediate: list[SampleResult] = []
    for sample in samples:
        if sample.load_error:
            immediate.append(_load_failed_result(sample))
            continue
        if not sample.instructions:
            continue
        sample_dir = cand_root / sample.sample_id
        for index in range(len(sample.instructions)):
            patch_path = sample_dir / f"{index}.json"
            if not patch_path.exists():
                record = _zero_gated(metrics_mod.MetricRecord(esr=0))
                failed = SampleResult(sample.sample_id, sample.domain, record, index)
                failed.diagnostics.append("PATCH_MISSING")
                immediate.append(failed)
                continue
            patch_json = patch_path.read_text("utf-8")
            jobs.append(
                lambda s=sample, i=index, p=patch_json: evaluate_task2_sample(
                    s, i, p, backends, config
                )
            )
    results = immediate + _run_parallel(jobs, config.workers)
    return _assemble_report("task2", config, backends, results)


def _config_snapshot(config: EvalConfig) -> dict:
    snap = dict(config.__dict__)
    snap["aggregate_weights"] = dict(sorted(config.aggregate_weights.items()))
    return snap


def _assemble_report(task: str, config: EvalConfig, backends: dict, results) -> Report:
    results = sorted(results, key=lambda r: r.sort_key)
    # Mock runs must be byte-identical, so deterministic runs carry no
    # timestamp; http runs are allowed one.
    deterministic = config.judge == "mock" and config.embedder == "test"
    if deterministic:
        timestamp = None
    else:
        from datetime import datetime, timezone

        timestamp = datetime.now(timezone.utc).isoformat()
    meta = {
        "task": task,
        "judge_identity": getattr(backends["judge"], "identity", "unknown"),
        "embedder_identity": getattr(backends["embedder"], "identity", "unknown"),
        "timestamp": timestamp,
        "config": _config_snapshot(config),
    }
    aggregates = {
        "overall": aggregate(results, "overall") if results else {},
        "by_domain": aggregate(results, "by_domain") if results else {},
        "by_difficulty": aggregate(results, "by_difficulty") if results else {},
    }
    return Report(meta, results, aggregates)


def report_to_dict(report: Report) -> dict:
    records = []
    for result in report.records:
        entry = {
            "sample_id": result.sample_id,
            "domain": result.domain,
            "diagnostics": list(result.diagnostics),
        }
        if result.instruction_index is not None:
            entry["instruction_index"] = result.instruction_index
        for name in ("esr", "scs", "codexqa", "xdrfr", "visual_similarity", "xed", "xtc", "difficulty"):
            entry[name] = getattr(result.metrics, name)
        records.append(entry)
    return {"meta": report.meta, "records": records, "aggregates": report.aggregates}


def lint_report(report_data: dict) -> None:
    """Re-assert the execution gate over an emitted report: any record with
    esr=0 must carry zeros in every populated downstream score."""
    for record in report_data.get("records", []):
        if record.get("esr") != 0:
            continue
        for name in GATED_SCORES:
            value = record.get(name)
            if value is not None and value != 0:
                raise ReportGatingError(
                    f"record {record.get('sample_id')} has esr=0 but {name}={value}"
                )


def write_report(report: Report, path: str) -> None:
    data = report_to_dict(report)
    lint_report(data)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=False) + "\n", "utf-8")
