"""Deterministic metric computations.

Covers the execution gate (parsable and renderable), character edit distance,
token counts and difficulty tiers, score aggregation for the judge-based
metrics, QA answer matching, and the structural-comparison pipeline
(bipartite alignment, IoU, completeness, style agreement, editability).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import Document, parse_document, translate_vertices, scale_vertices
from .model import XmlSyntaxError, MissingModelError
from .render import BoundingBox, RenderedScene, CyclicParentError, resolve_scene, is_renderable
from .validate import is_parsable, validate_document

__all__ = [
    "MetricRecord",
    "AlignmentResult",
    "esr",
    "xed",
    "xtc",
    "FallbackTokenizer",
    "VocabTokenizer",
    "TokenizerUnavailableError",
    "classify_difficulty_task1",
    "classify_difficulty_task2",
    "cosine_similarity",
    "aggregate_scs",
    "xdrfr_score",
    "codexqa_match",
    "codexqa_accuracy",
    "align_elements",
    "iou",
    "completeness",
    "style_agreement",
    "editability_check",
    "weighted_aggregate",
    "round_half_up",
]

# Task-1 difficulty thresholds (token count of the reference XML).
TASK1_EASY_BELOW = 8645
TASK1_MEDIUM_MAX = 14000

DEFAULT_CATEGORY_PENALTY = 1.0
DEFAULT_UNMATCHED_CUTOFF = 0.8
DEFAULT_AGGREGATE_WEIGHTS = {
    "structure": 0.4,
    "completeness": 0.3,
    "style": 0.2,
    "editability": 0.1,
}


class TokenizerUnavailableError(RuntimeError):
    """The requested tokenizer backend is not configured."""


class DimensionMismatchError(ValueError):
    pass


class ZeroVectorError(ValueError):
    pass


class BadDimensionCountError(ValueError):
    pass


class ScoreOutOfRangeError(ValueError):
    pass


class OutOfRangeError(ValueError):
    pass


class EmptyAnswerSetError(ValueError):
    pass


class EmptyResultSetError(ValueError):
    pass


class WeightMismatchError(ValueError):
    pass


@dataclass
class MetricRecord:
    """Per-sample metric values. esr=0 forces populated downstream scores
    to 0 (the execution gate)."""

    esr: int
    scs: Optional[float] = None
    codexqa: Optional[float] = None
    xdrfr: Optional[float] = None
    visual_similarity: Optional[float] = None
    xed: Optional[int] = None
    xtc: Optional[int] = None
    difficulty: Optional[str] = None


def round_half_up(value: float, places: int) -> float:
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def esr(xml_text: str) -> int:
    """1 iff the text parses, validates without errors, and renders."""
    if not is_parsable(xml_text):
        return 0
    doc = parse_document(xml_text)
    return 1 if is_renderable(doc) else 0


def xed(a: str, b: str) -> int:
    """Character-level Levenshtein distance."""
    # Trim the common prefix/suffix; identity and near-identity inputs are
    # the frequent case for edit-distance over whole documents.
    pre = 0
    limit = min(len(a), len(b))
    while pre < limit and a[pre] == b[pre]:
        pre += 1
    suf = 0
    while suf < limit - pre and a[len(a) - 1 - suf] == b[len(b) - 1 - suf]:
        suf += 1
    a = a[pre : len(a) - suf]
    b = b[pre : len(b) - suf]
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
        previous = current
    return previous[-1]


class FallbackTokenizer:
    """Deterministic complexity proxy: each maximal run of letters, digits,
    or other non-space characters counts as one token; whitespace separates
    runs and is not counted."""

    name = "fallback"

    @staticmethod
    def _category(ch: str) -> str:
        if ch.isspace():
            return "space"
        if ch.isalpha():
            return "letter"
        if ch.isdigit():
            return "digit"
        return "punct"

    def count(self, text: str) -> int:
        count = 0
        prev = "space"
        for ch in text:
            cat = self._category(ch)
            if cat != "space" and cat != prev:
                count += 1
            prev = cat
        return count


class VocabTokenizer:
    """Byte-pair tokenizer driven by a tiktoken-style vocabulary file
    (base64 token and rank per line). Pre-tokenization is a simplified
    word/number/punctuation split, so counts approximate the reference
    tokenizer rather than matching it byte-exactly."""

    name = "vocab"

    _PRETOKEN_RE = re.compile(r"\s+|[A-Za-z]+|[0-9]+|[^\sA-Za-z0-9]+")

    def __init__(self, vocab_path: str):
        import base64

        self.ranks: dict[bytes, int] = {}
        try:
            with open(vocab_path, "rb") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    token_b64, rank = line.split()
                    self.ranks[base64.b64decode(token_b64)] = int(rank)
        except OSError as exc:
            raise TokenizerUnavailableError(f"cannot load vocabulary: {exc}") from exc
        if not self.ranks:
            raise TokenizerUnavailableError(f"empty vocabulary file: {vocab_path}")

    def _bpe(self, piece: bytes) -> int:
        parts = [piece[i : i + 1] for i in range(len(piece))]
        while len(parts) > 1:
            best_rank = None
            best_idx = None
            for i in range(len(parts) - 1):
                rank = self.ranks.get(parts[i] + parts[i + 1])
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_idx = rank, i
            if best_idx is None:
                break
            parts[best_idx : best_idx + 2] = [parts[best_idx] + parts[best_idx + 1]]
        return len(parts)

    def count(self, text: str) -> int:
        total = 0
        for match in self._PRETOKEN_RE.finditer(text):
            total += self._bpe(match.group().encode("utf-8"))
        return total


def xtc(xml_text: str, tokenizer) -> int:
    """Token count under the given tokenizer backend."""
    if tokenizer is None:
        raise TokenizerUnavailableError("no tokenizer configured")
    return tokenizer.count(xml_text)


def classify_difficulty_task1(xtc_value: int) -> str:
    if xtc_value < TASK1_EASY_BELOW:
        return "Easy"
    if xtc_value <= TASK1_MEDIUM_MAX:
        return "Medium"
    return "Hard"


def classify_difficulty_task2(op_count: int) -> str:
    if not 1 <= op_count <= 7:
        raise OutOfRangeError(f"operation count {op_count} outside 1-7")
    if op_count <= 2:
        return "Easy"
    if op_count <= 4:
        return "Medium"
    return "Hard"


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    if u_arr.shape != v_arr.shape or u_arr.ndim != 1 or u_arr.size == 0:
        raise DimensionMismatchError(f"shapes {u_arr.shape} vs {v_arr.shape}")
    nu = np.linalg.norm(u_arr)
    nv = np.linalg.norm(v_arr)
    if nu == 0 or nv == 0:
        raise ZeroVectorError("cosine similarity undefined for zero vectors")
    return float(np.dot(u_arr, v_arr) / (nu * nv))


def aggregate_scs(dimension_scores: Sequence[float]) -> float:
    """Mean of the 0-10 dimension scores divided by 10, rounded half-up to
    3 decimals. Two scores for edit scoring, three for generation scoring."""
    if len(dimension_scores) not in (2, 3):
        raise BadDimensionCountError(f"expected 2 or 3 scores, got {len(dimension_scores)}")
    for score in dimension_scores:
        if not 0 <= score <= 10:
            raise ScoreOutOfRangeError(f"dimension score {score} outside [0, 10]")
    mean = sum(dimension_scores) / len(dimension_scores)
    return round_half_up(mean / 10, 3)


def xdrfr_score(answers: Sequence[str]) -> float:
    """Fraction of "Yes" answers among the verification answers."""
    if not answers:
        raise EmptyAnswerSetError("no answers")
    normalized = [a.strip().casefold() for a in answers]
    for a in normalized:
        if a not in ("yes", "no"):
            raise ValueError(f"non-binary answer {a!r}")
    return normalized.count("yes") / len(normalized)


_COLOR_NAMES = {
    "red": "#FF0000",
    "blue": "#0000FF",
    "green": "#00FF00",
    "yellow": "#FFFF00",
    "orange": "#FFA500",
    "purple": "#800080",
    "black": "#000000",
    "white": "#FFFFFF",
    "gray": "#808080",
    "grey": "#808080",
    "cyan": "#00FFFF",
    "magenta": "#FF00FF",
    "pink": "#FFC0CB",
    "brown": "#A52A2A",
}

_HEX_RE = re.compile(r"^#([0-9a-f]{3}|[0-9a-f]{6})$")
_NUMBER_RE = re.compile(r"^[+-]?[\d,._ ]+$")


def _semantic_normalize(text: str) -> str:
    value = " ".join(text.strip().casefold().split())
    if value in _COLOR_NAMES:
        return _COLOR_NAMES[value].casefold()
    hex_match = _HEX_RE.match(value)
    if hex_match:
        digits = hex_match.group(1)
        if len(digits) == 3:
            digits = "".join(ch * 2 for ch in digits)
        return f"#{digits}"
    if _NUMBER_RE.match(value) and any(ch.isdigit() for ch in value):
        return re.sub(r"[,._ ]", "", value)
    return value


def codexqa_match(predicted: str, gold: str, strategy: str) -> bool:
    """Answer matching: exact, inclusion, or semantic-normalized."""
    p = " ".join(predicted.strip().casefold().split())
    g = " ".join(gold.strip().casefold().split())
    if strategy == "exact":
        return p == g
    if strategy == "inclusion":
        if not p or not g:
            return p == g
        return g in p or p in g
    if strategy == "semantic-normalized":
        return _semantic_normalize(predicted) == _semantic_normalize(gold)
    raise ValueError(f"unknown strategy {strategy!r}")


# Matching strategy per question type: counting and identification answers are
# numbers/colors/labels (normalize), relationship answers enumerate elements
# (containment).
STRATEGY_BY_QUESTION_TYPE = {
    "counting": "semantic-normalized",
    "identification": "semantic-normalized",
    "relationship": "inclusion",
}


def codexqa_accuracy(results: Sequence[bool]) -> float:
    if not results:
        raise EmptyResultSetError("no results")
    return sum(1 for r in results if r) / len(results)


@dataclass(frozen=True)
class AlignmentResult:
    pairs: tuple[tuple[str, str, float], ...]  # (ref_id, cand_id, cost)
    unmatched_ref: tuple[str, ...]
    unmatched_cand: tuple[str, ...]
    total_cost: float


def _shape_category(cell) -> str:
    if cell.style is None:
        return "rect"
    token = cell.style.shape_token
    if token in ("ellipse", "rhombus"):
        return token
    if token == "rounded" or cell.style.get("rounded") == "1":
        return "rounded"
    return token or "rect"


def align_elements(
    ref_doc: Document,
    ref_scene: RenderedScene,
    cand_doc: Document,
    cand_scene: RenderedScene,
    *,
    category_penalty: float = DEFAULT_CATEGORY_PENALTY,
    cutoff: float = DEFAULT_UNMATCHED_CUTOFF,
) -> AlignmentResult:
    """Minimum-cost bipartite matching of vertex cells.

    Pair cost is a category penalty (0 when shape categories agree) plus the
    Euclidean center distance normalized by the reference canvas diagonal.
    Pairs costing more than the cutoff are left unmatched after the solve.
    """
    ref_cells = [c for c in ref_doc.all_cells() if c.kind == "vertex" and c.id in ref_scene.boxes]
    cand_cells = [c for c in cand_doc.all_cells() if c.kind == "vertex" and c.id in cand_scene.boxes]
    if not ref_cells or not cand_cells:
        return AlignmentResult(
            (),
            tuple(c.id for c in ref_cells),
            tuple(c.id for c in cand_cells),
            0.0,
        )

    diag = math.hypot(ref_scene.canvas.width, ref_scene.canvas.height)
    cost = np.zeros((len(ref_cells), len(cand_cells)))
    for i, rc in enumerate(ref_cells):
        r_box = ref_scene.boxes[rc.id]
        r_cat = _shape_category(rc)
        for j, cc in enumerate(cand_cells):
            c_box = cand_scene.boxes[cc.id]
            dist = math.dist(r_box.center, c_box.center) / diag
            cost[i, j] = dist + (0.0 if r_cat == _shape_category(cc) else category_penalty)

    rows, cols = linear_sum_assignment(cost)
    pairs = []
    matched_ref = set()
    matched_cand = set()
    for i, j in zip(rows, cols):
        pair_cost = float(cost[i, j])
        if pair_cost > cutoff:
            continue
        pairs.append((ref_cells[i].id, cand_cells[j].id, pair_cost))
        matched_ref.add(ref_cells[i].id)
        matched_cand.add(cand_cells[j].id)
    return AlignmentResult(
        tuple(pairs),
        tuple(c.id for c in ref_cells if c.id not in matched_ref),
        tuple(c.id for c in cand_cells if c.id not in matched_cand),
        sum(p[2] for p in pairs),
    )


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two axis-aligned boxes; 0 for empty union."""
    ix = max(0.0, min(a.x + a.width, b.x + b.width) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.height, b.y + b.height) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def completeness(alignment: AlignmentResult, ref_vertex_count: int) -> float:
    """Matched fraction of the reference vertices; 1 for an empty reference."""
    if ref_vertex_count == 0:
        return 1.0
    return len(alignment.pairs) / ref_vertex_count


STYLE_AGREEMENT_FIELDS = ("shape_token", "fillColor", "strokeColor", "dashed", "endArrow")


def style_agreement(alignment: AlignmentResult, ref: Document, cand: Document) -> float:
    """Agreement rate of the evaluated style fields over matched pairs; both
    sides omitting a field counts as agreement."""
    if not alignment.pairs:
        return 1.0
    ref_cells = {c.id: c for c in ref.all_cells()}
    cand_cells = {c.id: c for c in cand.all_cells()}
    agreed = 0
    total = 0
    for ref_id, cand_id, _ in alignment.pairs:
        rc, cc = ref_cells[ref_id], cand_cells[cand_id]
        for field_name in STYLE_AGREEMENT_FIELDS:
            if field_name == "shape_token":
                rv = rc.style.shape_token if rc.style else None
                cv = cc.style.shape_token if cc.style else None
            else:
                rv = rc.style.get(field_name) if rc.style else None
                cv = cc.style.get(field_name) if cc.style else None
            total += 1
            if rv == cv:
                agreed += 1
    return agreed / total


@dataclass(frozen=True)
class EditabilityResult:
    passed: bool
    findings: tuple[tuple[str, str], ...]  # (code, cell_id)


def editability_check(doc: Document) -> EditabilityResult:
    """Programmatic edit probes: translate all vertices, scale them, and
    recompute edge paths; attachments must survive each probe."""
    findings: list[tuple[str, str]] = []
    passed = True

    probes = (
        translate_vertices(doc, 10, 10),
        scale_vertices(doc, 1.5),
        doc,
    )
    for probed in probes:
        report = validate_document(probed)
        if not report.valid:
            passed = False
            for diag in report.errors:
                findings.append((diag.code, diag.cell_id or ""))
            continue
        try:
            scene = resolve_scene(probed)
        except CyclicParentError:
            passed = False
            findings.append(("CYCLIC_PARENT", ""))
            continue
        for cell in probed.all_cells():
            if cell.kind != "edge":
                continue
            for ref in (cell.source, cell.target):
                if ref is not None and ref not in scene.boxes:
                    passed = False
                    findings.append(("BROKEN_ATTACHMENT", cell.id))
            if cell.id not in scene.edge_paths:
                passed = False
                findings.append(("UNRESOLVED_PATH", cell.id))
        for edge_id in scene.floating_edges:
            findings.append(("FLOATING_ENDPOINT", edge_id))

    deduped = tuple(dict.fromkeys(findings))
    return EditabilityResult(passed, deduped)


def weighted_aggregate(components: dict[str, float], weights: dict[str, float]) -> float:
    """Weighted mean of named scores in [0, 1]."""
    if not weights:
        raise WeightMismatchError("no weights supplied")
    total_weight = sum(weights.values())
    if total_weight <= 0:
        raise WeightMismatchError("weights must sum to a positive value")
    acc = 0.0
    for name, weight in weights.items():
        if name not in components:
            raise WeightMismatchError(f"missing component {name!r}")
        acc += weight * components[name]
    return acc / total_weight
