"""Deterministic application of JSON fragment-replacement patches.

A patch is a JSON object ``{"changes": [{"original_fragment": ...,
"modified_fragment": ...}, ...]}``; changes apply in listed order against the
evolving source text. An empty modified fragment deletes the matched span.
Exact substring matching is tried first; when it fails, a whitespace-tolerant
(canonical-form) scan replaces the first canonical occurrence.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .model import Document

__all__ = [
    "Change",
    "PatchDocument",
    "AtomicOperation",
    "ATOMIC_CATEGORIES",
    "JsonSyntaxError",
    "SchemaViolationError",
    "EmptyPatchError",
    "NoMatchError",
    "AmbiguousExactError",
    "AppliedChange",
    "PatchResult",
    "parse_patch",
    "canonicalize_fragment",
    "apply_patch",
    "classify_changes",
]


class JsonSyntaxError(ValueError):
    """Patch text is not valid JSON."""


class SchemaViolationError(ValueError):
    """Patch JSON does not match the changes schema."""


class EmptyPatchError(ValueError):
    """Patch contains zero changes."""


class NoMatchError(ValueError):
    def __init__(self, change_index: int, message: str):
        super().__init__(message)
        self.change_index = change_index


class AmbiguousExactError(ValueError):
    def __init__(self, change_index: int, message: str):
        super().__init__(message)
        self.change_index = change_index


@dataclass(frozen=True)
class Change:
    original_fragment: str
    modified_fragment: str  # empty string means deletion


@dataclass(frozen=True)
class PatchDocument:
    changes: tuple[Change, ...]


_FENCE_RE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*\n?|\n?\s*```\s*$")


def strip_code_fences(text: str) -> str:
    """Remove a leading/trailing Markdown code fence, if present."""
    stripped = text.strip()
    if stripped.startswith("```"):
        stripped = re.sub(r"^```[a-zA-Z0-9_-]*[ \t]*\r?\n?", "", stripped)
        stripped = re.sub(r"\r?\n?```$", "", stripped.rstrip())
    return stripped


def parse_patch(text: str) -> PatchDocument:
    """Parse patch JSON; code fences around the object are tolerated."""
    try:
        data = json.loads(strip_code_fences(text))
    except json.JSONDecodeError as exc:
        raise JsonSyntaxError(str(exc)) from exc
    if not isinstance(data, dict) or "changes" not in data:
        raise SchemaViolationError("patch must be an object with a 'changes' array")
    raw_changes = data["changes"]
    if not isinstance(raw_changes, list):
        raise SchemaViolationError("'changes' must be an array")
    if not raw_changes:
        raise EmptyPatchError("patch contains no changes")
    changes = []
    for i, item in enumerate(raw_changes):
        if not isinstance(item, dict) or "original_fragment" not in item:
            raise SchemaViolationError(f"change {i} is missing 'original_fragment'")
        original = item["original_fragment"]
        if not isinstance(original, str) or original == "":
            raise SchemaViolationError(f"change {i} has an empty original_fragment")
        modified = item.get("modified_fragment", "")
        if not isinstance(modified, str):
            raise SchemaViolationError(f"change {i} modified_fragment must be a string")
        changes.append(Change(original, modified))
    return PatchDocument(tuple(changes))


def _canonical_tokens(text: str) -> list[tuple[str, int, int]]:
    """(char, start, end) tokens with whitespace runs collapsed to one space."""
    tokens: list[tuple[str, int, int]] = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            j = i
            while j < n and text[j].isspace():
                j += 1
            tokens.append((" ", i, j))
            i = j
        else:
            tokens.append((text[i], i, i + 1))
            i += 1
    # Drop spaces adjacent to markup punctuation and at the boundaries.
    out: list[tuple[str, int, int]] = []
    for k, tok in enumerate(tokens):
        if tok[0] == " ":
            prev_char = tokens[k - 1][0] if k > 0 else None
            next_char = tokens[k + 1][0] if k + 1 < len(tokens) else None
            if prev_char is None or next_char is None:
                continue
            if prev_char in "<>=" or next_char in "<>=":
                continue
        out.append(tok)
    return out


def canonicalize_fragment(fragment: str) -> str:
    """Whitespace-insensitive key used for fuzzy fragment matching."""
    return "".join(tok[0] for tok in _canonical_tokens(fragment))


@dataclass(frozen=True)
class AppliedChange:
    index: int
    match_mode: str  # exact | fuzzy
    offset: int  # character offset of the match in the then-current text


@dataclass(frozen=True)
class PatchResult:
    result_text: str
    applied: tuple[AppliedChange, ...]


def _fuzzy_find(text: str, fragment: str) -> tuple[int, int] | None:
    """First canonical occurrence of fragment in text, as original offsets."""
    needle = canonicalize_fragment(fragment)
    if not needle:
        return None
    tokens = _canonical_tokens(text)
    haystack = "".join(tok[0] for tok in tokens)
    pos = haystack.find(needle)
    if pos < 0:
        return None
    start = tokens[pos][1]
    end = tokens[pos + len(needle) - 1][2]
    return start, end


def apply_patch(xml_text: str, patch: PatchDocument) -> PatchResult:
    """Apply changes in order; the result is not revalidated here.

    Raises AmbiguousExactError when an original fragment occurs more than
    once verbatim (replacement would be order-dependent), and NoMatchError
    when neither exact nor fuzzy matching finds the fragment.
    """
    text = xml_text
    applied: list[AppliedChange] = []
    for i, change in enumerate(patch.changes):
        count = text.count(change.original_fragment)
        if count > 1:
            raise AmbiguousExactError(
                i, f"change {i}: original_fragment occurs {count} times"
            )
        if count == 1:
            offset = text.index(change.original_fragment)
            end = offset + len(change.original_fragment)
            mode = "exact"
        else:
            span = _fuzzy_find(text, change.original_fragment)
            if span is None:
                raise NoMatchError(
                    i, f"change {i}: original_fragment not found (exact or fuzzy)"
                )
            offset, end = span
            mode = "fuzzy"
        text = text[:offset] + change.modified_fragment + text[end:]
        applied.append(AppliedChange(i, mode, offset))
    return PatchResult(text, tuple(applied))


# The closed 14-category edit taxonomy.
ATOMIC_CATEGORIES = (
    "node_color",
    "node_shape",
    "node_size",
    "node_text",
    "node_delete",
    "node_add",
    "node_move",
    "edge_color",
    "edge_style",
    "edge_arrow",
    "edge_delete",
    "edge_add",
    "edge_redirect",
    "edge_path_update",
)


@dataclass(frozen=True)
class AtomicOperation:
    category: str
    target_cell_id: str | None
    detail: str


def _style_get(cell, key):
    return cell.style.get(key) if cell.style is not None else None


def _geom(cell, attr):
    return getattr(cell.geometry, attr) if cell.geometry is not None else None


def classify_changes(before: Document, after: Document) -> list[AtomicOperation]:
    """Diff cells by id and map each delta to the closest atomic category.

    Deltas that fit none of the attribute rules are reported with detail
    "unclassified" under the nearest structural category (node_shape for
    vertex style churn, node_move for other vertex deltas, edge_style for
    edge churn) so every real change is counted.
    """
    before_cells = {c.id: c for c in before.all_cells()}
    after_cells = {c.id: c for c in after.all_cells()}
    ops: list[AtomicOperation] = []

    for cell_id in before_cells:
        if cell_id in after_cells:
            continue
        kind = before_cells[cell_id].kind
        if kind == "vertex":
            ops.append(AtomicOperation("node_delete", cell_id, "vertex removed"))
        elif kind == "edge":
            ops.append(AtomicOperation("edge_delete", cell_id, "edge removed"))
    for cell_id in after_cells:
        if cell_id in before_cells:
            continue
        kind = after_cells[cell_id].kind
        if kind == "vertex":
            ops.append(AtomicOperation("node_add", cell_id, "vertex added"))
        elif kind == "edge":
            ops.append(AtomicOperation("edge_add", cell_id, "edge added"))

    for cell_id, old in before_cells.items():
        new = after_cells.get(cell_id)
        if new is None or old == new:
            continue
        if old.kind == "vertex" or new.kind == "vertex":
            ops.extend(_classify_vertex_delta(cell_id, old, new))
        elif old.kind == "edge" or new.kind == "edge":
            ops.extend(_classify_edge_delta(cell_id, old, new))
        else:
            ops.append(AtomicOperation("node_move", cell_id, "unclassified"))
    return ops


def _classify_vertex_delta(cell_id, old, new) -> list[AtomicOperation]:
    ops = []
    matched = False
    for key in ("fillColor", "strokeColor"):
        if _style_get(old, key) != _style_get(new, key):
            ops.append(AtomicOperation("node_color", cell_id, f"{key} changed"))
            matched = True
            break
    old_shape = old.style.shape_token if old.style else None
    new_shape = new.style.shape_token if new.style else None
    if old_shape != new_shape:
        ops.append(AtomicOperation("node_shape", cell_id, f"{old_shape}->{new_shape}"))
        matched = True
    if (_geom(old, "width"), _geom(old, "height")) != (_geom(new, "width"), _geom(new, "height")):
        ops.append(AtomicOperation("node_size", cell_id, "extent changed"))
        matched = True
    if old.value != new.value:
        ops.append(AtomicOperation("node_text", cell_id, "label changed"))
        matched = True
    if (_geom(old, "x"), _geom(old, "y")) != (_geom(new, "x"), _geom(new, "y")):
        ops.append(AtomicOperation("node_move", cell_id, "position changed"))
        matched = True
    if not matched:
        category = "node_shape" if old.style != new.style else "node_move"
        ops.append(AtomicOperation(category, cell_id, "unclassified"))
    return ops


def _classify_edge_delta(cell_id, old, new) -> list[AtomicOperation]:
    ops = []
    matched = False
    if (old.source, old.target) != (new.source, new.target):
        ops.append(AtomicOperation("edge_redirect", cell_id, "endpoint changed"))
        matched = True
    old_path = (
        (_geom(old, "points"), _geom(old, "source_point"), _geom(old, "target_point"))
    )
    new_path = (
        (_geom(new, "points"), _geom(new, "source_point"), _geom(new, "target_point"))
    )
    if old_path != new_path:
        ops.append(AtomicOperation("edge_path_update", cell_id, "waypoints changed"))
        matched = True
    for key in ("endArrow", "startArrow"):
        if _style_get(old, key) != _style_get(new, key):
            ops.append(AtomicOperation("edge_arrow", cell_id, f"{key} changed"))
            matched = True
            break
    for key in ("fillColor", "strokeColor"):
        if _style_get(old, key) != _style_get(new, key):
            ops.append(AtomicOperation("edge_color", cell_id, f"{key} changed"))
            matched = True
            break
    for key in ("dashed", "strokeWidth"):
        if _style_get(old, key) != _style_get(new, key):
            ops.append(AtomicOperation("edge_style", cell_id, f"{key} changed"))
            matched = True
            break
    if not matched:
        ops.append(AtomicOperation("edge_style", cell_id, "unclassified"))
    return ops
