"""Headless geometry resolution and SVG rendering.

Supported style subset: shape tokens rectangle (default), ellipse, rhombus,
rounded (rounded=1); keys fillColor, strokeColor, strokeWidth, dashed,
fontSize, endArrow, startArrow, edgeStyle=orthogonalEdgeStyle, and
exitX/exitY/entryX/entryY perimeter anchors. Unsupported style keys fall back
to a plain rectangle rendering; the document is still renderable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional
from xml.sax.saxutils import escape

from .model import Cell, Document, Page, Point

__all__ = [
    "BoundingBox",
    "RenderedScene",
    "CyclicParentError",
    "resolve_scene",
    "render_svg",
    "is_renderable",
]

CANVAS_PADDING = 20.0
MIN_CANVAS = 100.0


class CyclicParentError(ValueError):
    """A cell's parent chain loops back on itself."""


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.width / 2, self.y + self.height / 2)

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class RenderedScene:
    boxes: dict[str, BoundingBox]
    edge_paths: dict[str, tuple[Point, ...]]
    canvas: BoundingBox
    # Edge endpoints that resolved to a sourcePoint/targetPoint instead of a
    # cell reference; recorded so editability probes can report them.
    floating_edges: tuple[str, ...] = ()


def _page(doc: Document) -> Page:
    # Scenes are single-page; multi-page documents render their first page.
    return doc.pages[0]


def _absolute_offset(cell: Cell, by_id: dict[str, Cell]) -> tuple[float, float]:
    dx = dy = 0.0
    seen = {cell.id}
    parent_id = cell.parent
    while parent_id is not None:
        if parent_id in seen:
            raise CyclicParentError(f"parent chain of cell {cell.id!r} loops")
        seen.add(parent_id)
        parent = by_id.get(parent_id)
        if parent is None:
            break
        if parent.geometry is not None and not parent.geometry.relative:
            dx += parent.geometry.x
            dy += parent.geometry.y
        parent_id = parent.parent
    return dx, dy


def _perimeter_point(box: BoundingBox, toward: tuple[float, float]) -> Point:
    """Intersection of the center-to-toward ray with the box perimeter."""
    cx, cy = box.center
    dx, dy = toward[0] - cx, toward[1] - cy
    if dx == 0 and dy == 0:
        return Point(cx, cy)
    half_w, half_h = box.width / 2, box.height / 2
    if half_w == 0 or half_h == 0:
        return Point(cx, cy)
    scale = min(
        half_w / abs(dx) if dx else math.inf,
        half_h / abs(dy) if dy else math.inf,
    )
    return Point(cx + dx * scale, cy + dy * scale)


def _anchor_point(box: BoundingBox, fx: float, fy: float) -> Point:
    return Point(box.x + box.width * fx, box.y + box.height * fy)


def _edge_endpoint(
    cell: Cell,
    ref: Optional[str],
    fallback: Optional[Point],
    boxes: dict[str, BoundingBox],
    anchor_keys: tuple[str, str],
    toward: Optional[tuple[float, float]],
) -> Optional[Point]:
    if ref is not None and ref in boxes:
        box = boxes[ref]
        style = cell.style
        if style is not None:
            fx, fy = style.get(anchor_keys[0]), style.get(anchor_keys[1])
            if fx is not None and fy is not None:
                try:
                    return _anchor_point(box, float(fx), float(fy))
                except ValueError:
                    pass
        if toward is None:
            return Point(*box.center)
        return _perimeter_point(box, toward)
    return fallback


def _orthogonalize(path: list[Point]) -> list[Point]:
    """Insert L-shaped bends (horizontal, then vertical) between points."""
    out: list[Point] = []
    for i, pt in enumerate(path):
        if i > 0:
            prev = out[-1]
            if prev.x != pt.x and prev.y != pt.y:
                out.append(Point(pt.x, prev.y))
        out.append(pt)
    return out


def resolve_scene(doc: Document) -> RenderedScene:
    """Resolve absolute vertex boxes and edge polylines for the first page."""
    page = _page(doc)
    by_id = {c.id: c for c in page.cells}

    boxes: dict[str, BoundingBox] = {}
    for cell in page.cells:
        if cell.kind != "vertex" or cell.geometry is None:
            continue
        if cell.geometry.relative:
            # Relative geometry is label placement, not a spatial box.
            continue
        dx, dy = _absolute_offset(cell, by_id)
        g = cell.geometry
        boxes[cell.id] = BoundingBox(g.x + dx, g.y + dy, g.width, g.height)

    edge_paths: dict[str, tuple[Point, ...]] = {}
    floating: list[str] = []
    for cell in page.cells:
        if cell.kind != "edge":
            continue
        _absolute_offset(cell, by_id)  # cycle detection also covers edges
        g = cell.geometry
        waypoints = list(g.points) if g is not None else []
        src_fallback = g.source_point if g is not None else None
        tgt_fallback = g.target_point if g is not None else None

        src_box = boxes.get(cell.source) if cell.source else None
        tgt_box = boxes.get(cell.target) if cell.target else None
        # "toward" targets for perimeter clipping.
        if waypoints:
            src_toward: Optional[tuple[float, float]] = (waypoints[0].x, waypoints[0].y)
            tgt_toward: Optional[tuple[float, float]] = (waypoints[-1].x, waypoints[-1].y)
        else:
            src_toward = tgt_box.center if tgt_box else (
                (tgt_fallback.x, tgt_fallback.y) if tgt_fallback else None
            )
            tgt_toward = src_box.center if src_box else (
                (src_fallback.x, src_fallback.y) if src_fallback else None
            )

        start = _edge_endpoint(cell, cell.source, src_fallback, boxes, ("exitX", "exitY"), src_toward)
        end = _edge_endpoint(cell, cell.target, tgt_fallback, boxes, ("entryX", "entryY"), tgt_toward)
        if (cell.source is None or cell.source not in boxes) and src_fallback is not None:
            floating.append(cell.id)
        elif (cell.target is None or cell.target not in boxes) and tgt_fallback is not None:
            floating.append(cell.id)
        if start is None or end is None:
            continue
        path = [start, *waypoints, end]
        if cell.style is not None and cell.style.get("edgeStyle") == "orthogonalEdgeStyle":
            path = _orthogonalize(path)
        edge_paths[cell.id] = tuple(path)

    xs: list[float] = []
    ys: list[float] = []
    for box in boxes.values():
        xs.extend((box.x, box.x + box.width))
        ys.extend((box.y, box.y + box.height))
    for path in edge_paths.values():
        xs.extend(p.x for p in path)
        ys.extend(p.y for p in path)
    if xs:
        x0, y0 = min(xs) - CANVAS_PADDING, min(ys) - CANVAS_PADDING
        w = max(xs) - min(xs) + 2 * CANVAS_PADDING
        h = max(ys) - min(ys) + 2 * CANVAS_PADDING
        canvas = BoundingBox(x0, y0, max(w, MIN_CANVAS), max(h, MIN_CANVAS))
    else:
        canvas = BoundingBox(0.0, 0.0, MIN_CANVAS, MIN_CANVAS)

    return RenderedScene(boxes, edge_paths, canvas, tuple(sorted(floating)))


def _fmt(value: float) -> str:
    return f"{value:g}"


def _style_value(cell: Cell, key: str, default: str) -> str:
    if cell.style is None:
        return default
    return cell.style.get(key, default) or default


def _shape_svg(cell: Cell, box: BoundingBox) -> str:
    fill = _style_value(cell, "fillColor", "#FFFFFF")
    stroke = _style_value(cell, "strokeColor", "#000000")
    width = _style_value(cell, "strokeWidth", "1")
    dash = ' stroke-dasharray="6 4"' if _style_value(cell, "dashed", "0") == "1" else ""
    paint = f'fill="{fill}" stroke="{stroke}" stroke-width="{width}"{dash}'
    shape = cell.style.shape_token if cell.style is not None else None

    if shape == "ellipse":
        cx, cy = box.center
        return (
            f'<ellipse cx="{_fmt(cx)}" cy="{_fmt(cy)}" rx="{_fmt(box.width / 2)}" '
            f'ry="{_fmt(box.height / 2)}" {paint}/>'
        )
    if shape == "rhombus":
        cx, cy = box.center
        pts = (
            f"{_fmt(cx)},{_fmt(box.y)} {_fmt(box.x + box.width)},{_fmt(cy)} "
            f"{_fmt(cx)},{_fmt(box.y + box.height)} {_fmt(box.x)},{_fmt(cy)}"
        )
        return f'<polygon points="{pts}" {paint}/>'
    rounded = _style_value(cell, "rounded", "0") == "1" or shape == "rounded"
    rx = ' rx="10"' if rounded else ""
    return (
        f'<rect x="{_fmt(box.x)}" y="{_fmt(box.y)}" width="{_fmt(box.width)}" '
        f'height="{_fmt(box.height)}"{rx} {paint}/>'
    )


def _edge_svg(cell: Cell, path: tuple[Point, ...]) -> str:
    stroke = _style_value(cell, "strokeColor", "#000000")
    width = _style_value(cell, "strokeWidth", "1")
    dash = ' stroke-dasharray="6 4"' if _style_value(cell, "dashed", "0") == "1" else ""
    end_arrow = _style_value(cell, "endArrow", "block")
    start_arrow = _style_value(cell, "startArrow", "none")
    markers = ""
    if end_arrow != "none":
        markers += ' marker-end="url(#arrow)"'
    if start_arrow != "none":
        markers += ' marker-start="url(#arrow)"'
    pts = " ".join(f"{_fmt(p.x)},{_fmt(p.y)}" for p in path)
    return (
        f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
        f'stroke-width="{width}"{dash}{markers}/>'
    )


def _label_svg(cell: Cell, box: BoundingBox) -> str:
    size = _style_value(cell, "fontSize", "12")
    cx, cy = box.center
    return (
        f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" font-size="{size}" '
        f'text-anchor="middle" dominant-baseline="middle">{escape(cell.value or "")}</text>'
    )


def render_svg(doc: Document) -> str:
    """Deterministic SVG 1.1 rendering of the first page."""
    scene = resolve_scene(doc)
    page = _page(doc)
    canvas = scene.canvas
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_fmt(canvas.width)}" height="{_fmt(canvas.height)}" '
        f'viewBox="{_fmt(canvas.x)} {_fmt(canvas.y)} {_fmt(canvas.width)} {_fmt(canvas.height)}">',
        '<defs><marker id="arrow" markerWidth="10" markerHeight="8" refX="9" refY="4" '
        'orient="auto"><path d="M0,0 L10,4 L0,8 z"/></marker></defs>',
    ]
    for cell in page.cells:
        if cell.kind == "vertex" and cell.id in scene.boxes:
            box = scene.boxes[cell.id]
            lines.append(_shape_svg(cell, box))
            if cell.value:
                lines.append(_label_svg(cell, box))
        elif cell.kind == "edge" and cell.id in scene.edge_paths:
            path = scene.edge_paths[cell.id]
            lines.append(_edge_svg(cell, path))
            if cell.value:
                mid = path[len(path) // 2]
                lines.append(
                    f'<text x="{_fmt(mid.x)}" y="{_fmt(mid.y)}" font-size="12" '
                    f'text-anchor="middle">{escape(cell.value)}</text>'
                )
    lines.append("</svg>")
    return "\n".join(lines)


def is_renderable(doc: Document) -> bool:
    """True iff render_svg succeeds without error."""
    try:
        render_svg(doc)
    except CyclicParentError:
        return False
    return True
