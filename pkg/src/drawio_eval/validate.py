"""Structural validation of parsed documents.

Diagnostic codes are stable identifiers consumed by report tooling:
DUPLICATE_ID, MISSING_ROOT, EDGE_NO_GEOMETRY, BAD_PARENT, DANGLING_ENDPOINT,
GRID_OFFSET, ZERO_AREA, EXTERNAL_IMAGE, BAD_GEOMETRY, CROSS_PAGE_DUPLICATE_ID.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import Document, Page, parse_document, XmlSyntaxError, MissingModelError

__all__ = ["Diagnostic", "ValidationReport", "validate_document", "is_parsable"]


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: str  # error | warning
    message: str
    cell_id: Optional[str] = None


@dataclass(frozen=True)
class ValidationReport:
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def valid(self) -> bool:
        return not any(d.severity == "error" for d in self.diagnostics)

    @property
    def errors(self) -> tuple[Diagnostic, ...]:
        return tuple(d for d in self.diagnostics if d.severity == "error")

    @property
    def warnings(self) -> tuple[Diagnostic, ...]:
        return tuple(d for d in self.diagnostics if d.severity == "warning")


def _validate_page(page: Page, out: list[Diagnostic]) -> None:
    def error(code: str, message: str, cell_id: Optional[str] = None) -> None:
        out.append(Diagnostic(code, "error", message, cell_id))

    def warn(code: str, message: str, cell_id: Optional[str] = None) -> None:
        out.append(Diagnostic(code, "warning", message, cell_id))

    ids: dict[str, int] = {}
    for cell in page.cells:
        ids[cell.id] = ids.get(cell.id, 0) + 1
    for cell_id, count in ids.items():
        if count > 1:
            error("DUPLICATE_ID", f"id {cell_id!r} occurs {count} times", cell_id)

    cell_zero = next((c for c in page.cells if c.id == "0"), None)
    cell_one = next((c for c in page.cells if c.id == "1"), None)
    if cell_zero is None:
        error("MISSING_ROOT", 'required cell id="0" is missing')
    if cell_one is None:
        error("MISSING_ROOT", 'required cell id="1" is missing')
    elif cell_one.parent != "0":
        error("MISSING_ROOT", 'cell id="1" must have parent="0"', "1")

    for cell in page.cells:
        if cell.id == "0":
            continue
        if cell.parent is None:
            error("BAD_PARENT", f"cell {cell.id!r} has no parent", cell.id)
        elif cell.parent not in ids:
            error(
                "BAD_PARENT",
                f"cell {cell.id!r} parent {cell.parent!r} does not exist",
                cell.id,
            )

    for cell in page.cells:
        if cell.bad_geometry:
            names = ", ".join(name for name, _ in cell.bad_geometry)
            error(
                "BAD_GEOMETRY",
                f"cell {cell.id!r} has non-numeric geometry attribute(s): {names}",
                cell.id,
            )
        if cell.kind == "edge":
            if cell.geometry is None:
                error(
                    "EDGE_NO_GEOMETRY",
                    f"edge {cell.id!r} has no geometry element",
                    cell.id,
                )
            # Endpoints via source/target must resolve when the attribute is
            # present; absent attributes mean floating endpoints, which are ok.
            for attr, ref in (("source", cell.source), ("target", cell.target)):
                if ref is not None and ref not in ids:
                    error(
                        "DANGLING_ENDPOINT",
                        f"edge {cell.id!r} {attr} {ref!r} does not exist",
                        cell.id,
                    )
        elif cell.kind == "vertex" and cell.geometry is not None:
            g = cell.geometry
            if g.x % 10 != 0 or g.y % 10 != 0:
                warn(
                    "GRID_OFFSET",
                    f"vertex {cell.id!r} at ({g.x:g}, {g.y:g}) is off the 10-unit grid",
                    cell.id,
                )
            if g.width * g.height == 0:
                warn("ZERO_AREA", f"vertex {cell.id!r} has zero area", cell.id)

        if cell.style is not None:
            shape = cell.style.shape_token or cell.style.get("shape")
            image = cell.style.get("image", "")
            if shape == "image" and image.startswith(("http://", "https://")):
                warn(
                    "EXTERNAL_IMAGE",
                    f"cell {cell.id!r} references an external image",
                    cell.id,
                )


def validate_document(doc: Document) -> ValidationReport:
    """Check the schema minimum and structural rules; findings never raise."""
    out: list[Diagnostic] = []
    for page in doc.pages:
        _validate_page(page, out)

    # Id uniqueness is scoped per page; cross-page duplicates are lint only.
    seen: dict[str, str] = {}
    for page in doc.pages:
        for cell in page.cells:
            if cell.id in ("0", "1"):
                continue
            if cell.id in seen and seen[cell.id] != page.name:
                out.append(
                    Diagnostic(
                        "CROSS_PAGE_DUPLICATE_ID",
                        "warning",
                        f"id {cell.id!r} appears on multiple pages",
                        cell.id,
                    )
                )
            seen.setdefault(cell.id, page.name)
    return ValidationReport(tuple(out))


def is_parsable(text: str) -> bool:
    """True iff the text parses and validates with zero errors."""
    try:
        doc = parse_document(text)
    except (XmlSyntaxError, MissingModelError):
        return False
    return validate_document(doc).valid
