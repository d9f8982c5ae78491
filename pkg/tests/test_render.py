import pytest

from drawio_eval.model import Point, parse_document
from drawio_eval.render import (
    BoundingBox,
    CyclicParentError,
    is_renderable,
    render_svg,
    resolve_scene,
)

from conftest import make_doc


def test_scene_boxes_and_edge(minimal_snippet):
    scene = resolve_scene(parse_document(minimal_snippet))
    assert scene.boxes["2"] == BoundingBox(60, 40, 120, 60)
    assert scene.boxes["4"] == BoundingBox(260, 40, 120, 60)
    path = scene.edge_paths["3"]
    # Endpoints are clipped to the facing perimeters of the two boxes.
    assert path[0] == Point(180, 70)
    assert path[-1] == Point(260, 70)


def test_child_offsets_accumulate():
    text = make_doc(
        '    <mxCell id="2" vertex="1" parent="1">'
        '<mxGeometry x="100" y="100" width="200" height="200" as="geometry"/></mxCell>\n'
        '    <mxCell id="3" vertex="1" parent="2">'
        '<mxGeometry x="10" y="20" width="50" height="40" as="geometry"/></mxCell>'
    )
    scene = resolve_scene(parse_document(text))
    assert scene.boxes["3"] == BoundingBox(110, 120, 50, 40)


def test_cyclic_parent_raises():
    text = make_doc(
        '    <mxCell id="2" vertex="1" parent="3">'
        '<mxGeometry x="0" y="0" width="10" height="10" as="geometry"/></mxCell>\n'
        '    <mxCell id="3" vertex="1" parent="2">'
        '<mxGeometry x="0" y="0" width="10" height="10" as="geometry"/></mxCell>'
    )
    doc = parse_document(text)
    with pytest.raises(CyclicParentError):
        resolve_scene(doc)
    assert not is_renderable(doc)


def test_exit_entry_anchors():
    text = make_doc(
        '    <mxCell id="2" vertex="1" parent="1">'
        '<mxGeometry x="0" y="0" width="100" height="100" as="geometry"/></mxCell>\n'
        '    <mxCell id="3" vertex="1" parent="1">'
        '<mxGeometry x="300" y="0" width="100" height="100" as="geometry"/></mxCell>\n'
        '    <mxCell id="4" edge="1" parent="1" source="2" target="3" '
        'style="exitX=1;exitY=0.5;entryX=0;entryY=0.5;">'
        '<mxGeometry relative="1" as="geometry"/></mxCell>'
    )
    path = resolve_scene(parse_document(text)).edge_paths["4"]
    assert path[0] == Point(100, 50)
    assert path[-1] == Point(300, 50)


def test_orthogonal_edge_inserts_bend():
    text = make_doc(
        '    <mxCell id="2" vertex="1" parent="1">'
        '<mxGeometry x="0" y="0" width="40" height="40" as="geometry"/></mxCell>\n'
        '    <mxCell id="3" vertex="1" parent="1">'
        '<mxGeometry x="200" y="200" width="40" height="40" as="geometry"/></mxCell>\n'
        '    <mxCell id="4" edge="1" parent="1" source="2" target="3" '
        'style="edgeStyle=orthogonalEdgeStyle;">'
        '<mxGeometry relative="1" as="geometry"/></mxCell>'
    )
    path = resolve_scene(parse_document(text)).edge_paths["4"]
    for a, b in zip(path, path[1:]):
        assert a.x == b.x or a.y == b.y


def test_floating_endpoint_uses_fallback_point(minimal_snippet):
    text = minimal_snippet.replace('source="2" target="4"', 'source="2"')
    scene = resolve_scene(parse_document(text))
    assert scene.edge_paths["3"][-1] == Point(120, 100)
    assert scene.floating_edges == ("3",)


def test_canvas_padding(minimal_snippet):
    scene = resolve_scene(parse_document(minimal_snippet))
    c = scene.canvas
    assert (c.x, c.y) == (40, 20)
    assert (c.width, c.height) == (360, 100)


def test_empty_page_gets_minimum_canvas():
    scene = resolve_scene(parse_document(make_doc("")))
    assert (scene.canvas.width, scene.canvas.height) == (100, 100)


def test_svg_output_shapes(minimal_snippet):
    svg = render_svg(parse_document(minimal_snippet))
    assert svg.startswith('<?xml version="1.0"')
    assert 'viewBox="40 20 360 100"' in svg
    assert 'rx="10"' in svg  # rounded=1 on the Process box
    assert ">Process</text>" in svg
    assert 'marker-end="url(#arrow)"' in svg


def test_svg_shape_variants():
    text = make_doc(
        '    <mxCell id="2" vertex="1" parent="1" style="ellipse;fillColor=#d5e8d4;">'
        '<mxGeometry x="0" y="0" width="80" height="40" as="geometry"/></mxCell>\n'
        '    <mxCell id="3" vertex="1" parent="1" style="rhombus;">'
        '<mxGeometry x="100" y="0" width="80" height="40" as="geometry"/></mxCell>\n'
        '    <mxCell id="4" edge="1" parent="1" source="2" target="3" style="dashed=1;endArrow=none;">'
        '<mxGeometry relative="1" as="geometry"/></mxCell>'
    )
    svg = render_svg(parse_document(text))
    assert "<ellipse" in svg
    assert "<polygon" in svg
    assert 'fill="#d5e8d4"' in svg
    assert 'stroke-dasharray="6 4"' in svg
    assert "marker-end" not in svg


def test_svg_escapes_labels():
    text = make_doc(
        '    <mxCell id="2" value="a &lt; b" vertex="1" parent="1">'
        '<mxGeometry x="0" y="0" width="40" height="40" as="geometry"/></mxCell>'
    )
    assert "a &lt; b" in render_svg(parse_document(text))


def test_render_is_deterministic(minimal_snippet):
    doc = parse_document(minimal_snippet)
    assert render_svg(doc) == render_svg(doc)
