"""In-memory model of Draw.io/mxGraph XML documents.

Parses ``<mxfile>``-wrapped, bare ``<mxGraphModel>``, and bare ``<mxGraph>``
inputs into an immutable cell tree, and serializes the tree back to XML.
Structural rules (root cells, id uniqueness, parent resolution) are *not*
enforced here; that is the validate module's job.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from typing import Optional

__all__ = [
    "XmlSyntaxError",
    "MissingModelError",
    "Point",
    "Geometry",
    "StyleMap",
    "Cell",
    "Page",
    "Document",
    "Topology",
    "parse_document",
    "serialize_document",
    "parse_style",
    "find_cells_by_value",
    "build_topology",
]


class XmlSyntaxError(ValueError):
    """Input is not well-formed XML."""


class MissingModelError(ValueError):
    """Well-formed XML without any usable mxGraphModel element."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float


@dataclass(frozen=True)
class Geometry:
    """Placement of a cell; absent numeric attributes default to 0."""

    x: float = 0.0
    y: float = 0.0
    width: float = 0.0
    height: float = 0.0
    relative: bool = False
    points: tuple[Point, ...] = ()
    source_point: Optional[Point] = None
    target_point: Optional[Point] = None
    # Unknown mxGeometry attributes, kept for lossless serialization.
    extra: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class StyleMap:
    """Ordered view of a Draw.io style string.

    A leading bare token (no ``=``) is the shape token; the rest are ordered
    ``key=value`` entries. Serialization preserves entry order and a trailing
    semicolon when the input carried one.
    """

    shape_token: Optional[str] = None
    entries: tuple[tuple[str, str], ...] = ()
    trailing_semicolon: bool = False

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.entries:
            if k == key:
                return v
        return default

    def to_text(self) -> str:
        parts = []
        if self.shape_token is not None:
            parts.append(self.shape_token)
        parts.extend(f"{k}={v}" for k, v in self.entries)
        text = ";".join(parts)
        if self.trailing_semicolon and text:
            text += ";"
        return text


def parse_style(style_text: str) -> StyleMap:
    """Tolerantly parse a Draw.io style string. Empty segments are ignored."""
    shape_token: Optional[str] = None
    entries: list[tuple[str, str]] = []
    segments = style_text.split(";")
    trailing = style_text.endswith(";") and style_text.strip(";") != ""
    first = True
    for seg in segments:
        if seg == "":
            continue
        if "=" in seg:
            k, _, v = seg.partition("=")
            entries.append((k, v))
        elif first:
            shape_token = seg
        else:
            # Bare token past the first position: keep as a valueless entry.
            entries.append((seg, ""))
        first = False
    return StyleMap(shape_token, tuple(entries), trailing)


@dataclass(frozen=True)
class Cell:
    id: str
    parent: Optional[str] = None
    value: Optional[str] = None
    style: Optional[StyleMap] = None
    kind: str = "other"  # vertex | edge | other
    source: Optional[str] = None
    target: Optional[str] = None
    geometry: Optional[Geometry] = None
    # Unknown mxCell attributes, kept for lossless serialization.
    extra: tuple[tuple[str, str], ...] = ()
    # Wrapper element tag when the cell came wrapped (e.g. UserObject).
    wrapper_tag: Optional[str] = None
    wrapper_extra: tuple[tuple[str, str], ...] = ()
    # Geometry attributes that failed numeric parsing (name, raw value).
    bad_geometry: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Page:
    name: str
    cells: tuple[Cell, ...]
    model_attrs: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Document:
    pages: tuple[Page, ...]
    source_text: str = field(default="", compare=False)
    mxfile_wrapped: bool = field(default=False, compare=False)

    def all_cells(self):
        for page in self.pages:
            yield from page.cells

    def cell_by_id(self, cell_id: str) -> Optional[Cell]:
        for cell in self.all_cells():
            if cell.id == cell_id:
                return cell
        return None


_KNOWN_CELL_ATTRS = frozenset(
    {"id", "parent", "value", "style", "vertex", "edge", "source", "target"}
)
_KNOWN_GEOM_ATTRS = frozenset({"x", "y", "width", "height", "relative", "as"})


def _parse_number(raw: str) -> float:
    return float(raw)


def _parse_geometry(elem: ET.Element) -> tuple[Geometry, tuple[tuple[str, str], ...]]:
    values = {}
    bad: list[tuple[str, str]] = []
    for name in ("x", "y", "width", "height"):
        raw = elem.get(name)
        if raw is None:
            values[name] = 0.0
            continue
        try:
            values[name] = _parse_number(raw)
        except ValueError:
            values[name] = 0.0
            bad.append((name, raw))
    relative = elem.get("relative") == "1"
    extra = tuple((k, v) for k, v in elem.attrib.items() if k not in _KNOWN_GEOM_ATTRS)

    points: list[Point] = []
    source_point = target_point = None
    for child in elem:
        if child.tag == "mxPoint":
            role = child.get("as")
            try:
                pt = Point(float(child.get("x", "0")), float(child.get("y", "0")))
            except ValueError:
                bad.append(("point", ET.tostring(child, encoding="unicode")))
                continue
            if role == "sourcePoint":
                source_point = pt
            elif role == "targetPoint":
                target_point = pt
            else:
                points.append(pt)
        elif child.tag == "Array" and child.get("as") == "points":
            for pt_elem in child:
                if pt_elem.tag != "mxPoint":
                    continue
                try:
                    points.append(
                        Point(float(pt_elem.get("x", "0")), float(pt_elem.get("y", "0")))
                    )
                except ValueError:
                    bad.append(("point", ET.tostring(pt_elem, encoding="unicode")))
    geometry = Geometry(
        x=values["x"],
        y=values["y"],
        width=values["width"],
        height=values["height"],
        relative=relative,
        points=tuple(points),
        source_point=source_point,
        target_point=target_point,
        extra=extra,
    )
    return geometry, tuple(bad)


def _parse_cell(elem: ET.Element) -> Optional[Cell]:
    wrapper_tag = None
    wrapper_extra: tuple[tuple[str, str], ...] = ()
    cell_elem = elem
    if elem.tag != "mxCell":
        # UserObject/object wrappers: the wrapper carries id and label, the
        # inner mxCell carries structure. Anything else is skipped.
        inner = elem.find("mxCell")
        if inner is None:
            return None
        wrapper_tag = elem.tag
        wrapper_extra = tuple(
            (k, v) for k, v in elem.attrib.items() if k not in ("id", "label", "value")
        )
        cell_elem = inner

    attrib = cell_elem.attrib
    kind = "other"
    if attrib.get("vertex") == "1":
        kind = "vertex"
    elif attrib.get("edge") == "1":
        kind = "edge"

    if wrapper_tag is not None:
        cell_id = elem.get("id", cell_elem.get("id", ""))
        value = elem.get("label", elem.get("value"))
    else:
        cell_id = attrib.get("id", "")
        value = attrib.get("value")

    style_text = attrib.get("style")
    geometry = None
    bad_geometry: tuple[tuple[str, str], ...] = ()
    geom_elem = cell_elem.find("mxGeometry")
    if geom_elem is not None:
        geometry, bad_geometry = _parse_geometry(geom_elem)

    return Cell(
        id=cell_id,
        parent=attrib.get("parent"),
        value=value,
        style=parse_style(style_text) if style_text is not None else None,
        kind=kind,
        source=attrib.get("source"),
        target=attrib.get("target"),
        geometry=geometry,
        extra=tuple((k, v) for k, v in attrib.items() if k not in _KNOWN_CELL_ATTRS),
        wrapper_tag=wrapper_tag,
        wrapper_extra=wrapper_extra,
        bad_geometry=bad_geometry,
    )


def _parse_model(model_elem: ET.Element, name: str) -> Page:
    root = model_elem.find("root")
    if root is None:
        raise MissingModelError("model element has no <root> child")
    cells = []
    for child in root:
        cell = _parse_cell(child)
        if cell is not None:
            cells.append(cell)
    return Page(name=name, cells=tuple(cells), model_attrs=tuple(model_elem.attrib.items()))


def parse_document(text: str) -> Document:
    """Parse mxGraph XML text into a Document.

    Accepts an ``<mxfile>`` wrapper or a bare ``<mxGraphModel>``/``<mxGraph>``
    root. Raises XmlSyntaxError for malformed markup and MissingModelError
    when no model element is present.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlSyntaxError(str(exc)) from exc

    pages: list[Page] = []
    mxfile_wrapped = False
    if root.tag == "mxfile":
        mxfile_wrapped = True
        for i, diagram in enumerate(root.findall("diagram")):
            model = diagram.find("mxGraphModel")
            if model is None:
                model = diagram.find("mxGraph")
            if model is None:
                # Compressed/deflated payloads are out of scope.
                raise MissingModelError(
                    f"diagram {i} has no mxGraphModel child (compressed payloads unsupported)"
                )
            pages.append(_parse_model(model, diagram.get("name", f"Page-{i + 1}")))
        if not pages:
            raise MissingModelError("mxfile contains no diagram elements")
    elif root.tag in ("mxGraphModel", "mxGraph"):
        pages.append(_parse_model(root, "Page-1"))
    else:
        model = root.find(".//mxGraphModel")
        if model is None:
            raise MissingModelError(f"no mxGraphModel element under <{root.tag}>")
        pages.append(_parse_model(model, model.get("name", "Page-1")))

    return Document(pages=tuple(pages), source_text=text, mxfile_wrapped=mxfile_wrapped)


def _geometry_element(geometry: Geometry) -> ET.Element:
    elem = ET.Element("mxGeometry")
    if geometry.x:
        elem.set("x", _fmt_num(geometry.x))
    if geometry.y:
        elem.set("y", _fmt_num(geometry.y))
    if geometry.width:
        elem.set("width", _fmt_num(geometry.width))
    if geometry.height:
        elem.set("height", _fmt_num(geometry.height))
    if geometry.relative:
        elem.set("relative", "1")
    for k, v in geometry.extra:
        elem.set(k, v)
    elem.set("as", "geometry")
    if geometry.source_point is not None:
        _point_element(elem, geometry.source_point, "sourcePoint")
    if geometry.target_point is not None:
        _point_element(elem, geometry.target_point, "targetPoint")
    if geometry.points:
        arr = ET.SubElement(elem, "Array")
        arr.set("as", "points")
        for pt in geometry.points:
            _point_element(arr, pt, None)
    return elem


def _point_element(parent: ET.Element, pt: Point, role: Optional[str]) -> None:
    elem = ET.SubElement(parent, "mxPoint")
    elem.set("x", _fmt_num(pt.x))
    elem.set("y", _fmt_num(pt.y))
    if role:
        elem.set("as", role)


def _fmt_num(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)


def _cell_element(cell: Cell) -> ET.Element:
    inner = ET.Element("mxCell")
    if cell.wrapper_tag is None:
        inner.set("id", cell.id)
        if cell.value is not None:
            inner.set("value", cell.value)
    if cell.style is not None:
        inner.set("style", cell.style.to_text())
    if cell.kind == "vertex":
        inner.set("vertex", "1")
    elif cell.kind == "edge":
        inner.set("edge", "1")
    if cell.parent is not None:
        inner.set("parent", cell.parent)
    if cell.source is not None:
        inner.set("source", cell.source)
    if cell.target is not None:
        inner.set("target", cell.target)
    for k, v in cell.extra:
        inner.set(k, v)
    if cell.geometry is not None:
        inner.append(_geometry_element(cell.geometry))

    if cell.wrapper_tag is None:
        return inner
    wrapper = ET.Element(cell.wrapper_tag)
    wrapper.set("id", cell.id)
    if cell.value is not None:
        wrapper.set("label", cell.value)
    for k, v in cell.wrapper_extra:
        wrapper.set(k, v)
    wrapper.append(inner)
    return wrapper


def serialize_document(doc: Document) -> str:
    """Serialize a Document back to mxGraph XML (UTF-8 text).

    The output re-parses to an equivalent Document; attribute values are
    XML-escaped by the serializer.
    """

    def model_element(page: Page) -> ET.Element:
        model = ET.Element("mxGraphModel")
        for k, v in page.model_attrs:
            model.set(k, v)
        root = ET.SubElement(model, "root")
        for cell in page.cells:
            root.append(_cell_element(cell))
        return model

    if doc.mxfile_wrapped or len(doc.pages) > 1:
        mxfile = ET.Element("mxfile")
        for page in doc.pages:
            diagram = ET.SubElement(mxfile, "diagram")
            diagram.set("name", page.name)
            diagram.append(model_element(page))
        top = mxfile
    else:
        top = model_element(doc.pages[0])
    return ET.tostring(top, encoding="unicode")


def find_cells_by_value(doc: Document, needle: str) -> list[Cell]:
    """Cells whose unescaped value contains needle, in document order."""
    return [c for c in doc.all_cells() if c.value is not None and needle in c.value]


@dataclass(frozen=True)
class Topology:
    vertex_ids: tuple[str, ...]
    # (source_id, target_id, edge_cell_id) for edges with resolvable endpoints.
    arcs: tuple[tuple[str, str, str], ...]
    # (edge_cell_id, reason) for edges excluded from arcs.
    dangling: tuple[tuple[str, str], ...]


def build_topology(doc: Document) -> Topology:
    """Directed adjacency over all pages; dangling endpoints are reported,
    not silently dropped."""
    ids = {c.id for c in doc.all_cells()}
    vertices = tuple(c.id for c in doc.all_cells() if c.kind == "vertex")
    arcs: list[tuple[str, str, str]] = []
    dangling: list[tuple[str, str]] = []
    for cell in doc.all_cells():
        if cell.kind != "edge":
            continue
        problems = []
        if cell.source is None or cell.source not in ids:
            problems.append("source")
        if cell.target is None or cell.target not in ids:
            problems.append("target")
        if problems:
            dangling.append((cell.id, "unresolved " + "+".join(problems)))
        else:
            arcs.append((cell.source, cell.target, cell.id))
    return Topology(vertices, tuple(arcs), tuple(dangling))


def translate_vertices(doc: Document, dx: float, dy: float) -> Document:
    """New Document with every vertex geometry shifted by (dx, dy)."""
    return _map_vertex_geometry(doc, lambda g: replace(g, x=g.x + dx, y=g.y + dy))


def scale_vertices(doc: Document, factor: float) -> Document:
    """New Document with every vertex extent scaled by factor."""
    return _map_vertex_geometry(
        doc, lambda g: replace(g, width=g.width * factor, height=g.height * factor)
    )


def _map_vertex_geometry(doc: Document, fn) -> Document:
    pages = []
    for page in doc.pages:
        cells = []
        for cell in page.cells:
            if cell.kind == "vertex" and cell.geometry is not None:
                cells.append(replace(cell, geometry=fn(cell.geometry)))
            else:
                cells.append(cell)
        pages.append(replace(page, cells=tuple(cells)))
    return replace(doc, pages=tuple(pages))
