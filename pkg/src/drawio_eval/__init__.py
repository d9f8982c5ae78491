"""Evaluation toolkit for Draw.io/mxGraph diagram generation and editing."""

from .model import (
    Cell,
    Document,
    Geometry,
    Page,
    Point,
    StyleMap,
    Topology,
    build_topology,
    find_cells_by_value,
    parse_document,
    parse_style,
    serialize_document,
)
from .validate import Diagnostic, ValidationReport, is_parsable, validate_document
from .render import BoundingBox, RenderedScene, is_renderable, render_svg, resolve_scene
from .patch import (
    ATOMIC_CATEGORIES,
    AtomicOperation,
    Change,
    PatchDocument,
    apply_patch,
    classify_changes,
    parse_patch,
)
from .metrics import (
    MetricRecord,
    aggregate_scs,
    align_elements,
    classify_difficulty_task1,
    classify_difficulty_task2,
    codexqa_accuracy,
    codexqa_match,
    completeness,
    cosine_similarity,
    editability_check,
    esr,
    iou,
    style_agreement,
    weighted_aggregate,
    xdrfr_score,
    xed,
    xtc,
)
from .judge import (
    DecomposedInstruction,
    HttpEmbedder,
    HttpJudge,
    JudgePrompt,
    JudgeResponse,
    MockJudge,
    TestEmbedder,
    build_codexqa_prompt,
    build_scs_prompt,
    build_xdrfr_decompose_prompt,
    build_xdrfr_verify_prompt,
    embed,
    mock_judge,
    parse_scs_response,
    parse_yes_no,
)
from .config import EvalConfig, load_config
from .harness import (
    Report,
    SampleRecord,
    SampleResult,
    aggregate,
    evaluate_task1_sample,
    evaluate_task2_sample,
    lint_report,
    load_dataset,
    run_task1,
    run_task2,
    write_report,
)

__version__ = "0.1.0"
