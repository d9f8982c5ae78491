import json
import random

import pytest

from drawio_eval.model import parse_document
from drawio_eval.patch import (
    ATOMIC_CATEGORIES,
    AmbiguousExactError,
    EmptyPatchError,
    JsonSyntaxError,
    NoMatchError,
    SchemaViolationError,
    apply_patch,
    canonicalize_fragment,
    classify_changes,
    parse_patch,
    strip_code_fences,
)

from conftest import make_doc


def patch_of(*changes):
    return parse_patch(json.dumps({"changes": list(changes)}))


def change(orig, mod=""):
    return {"original_fragment": orig, "modified_fragment": mod}


def test_parse_patch_schema():
    patch = patch_of(change("a", "b"))
    assert patch.changes[0].original_fragment == "a"
    assert patch.changes[0].modified_fragment == "b"


def test_parse_patch_tolerates_code_fences():
    fenced = "```json\n" + json.dumps({"changes": [change("x", "y")]}) + "\n```"
    assert parse_patch(fenced).changes[0].original_fragment == "x"


def test_parse_patch_errors():
    with pytest.raises(JsonSyntaxError):
        parse_patch("{nope")
    with pytest.raises(SchemaViolationError):
        parse_patch('{"edits": []}')
    with pytest.raises(SchemaViolationError):
        parse_patch('{"changes": [{"modified_fragment": "x"}]}')
    with pytest.raises(SchemaViolationError):
        parse_patch('{"changes": [{"original_fragment": ""}]}')
    with pytest.raises(EmptyPatchError):
        parse_patch('{"changes": []}')


def test_strip_code_fences_passthrough():
    assert strip_code_fences("plain") == "plain"
    assert strip_code_fences("```xml\n<a/>\n```") == "<a/>"


def test_exact_replacement():
    result = apply_patch("hello cruel world", patch_of(change("cruel ", "")))
    assert result.result_text == "hello world"
    assert result.applied[0].match_mode == "exact"


def test_color_change_patch():
    doc = make_doc(
        '    <mxCell id="2" vertex="1" parent="1" style="rounded=0;fillColor=#FF0000;">'
        '<mxGeometry x="0" y="0" width="40" height="40" as="geometry"/></mxCell>'
    )
    result = apply_patch(doc, patch_of(change("fillColor=#FF0000", "fillColor=#0000FF")))
    assert "fillColor=#0000FF" in result.result_text
    assert "#FF0000" not in result.result_text


def test_empty_modified_fragment_deletes_cell():
    block = (
        '<mxCell id="2" vertex="1" parent="1">'
        '<mxGeometry x="0" y="0" width="40" height="40" as="geometry"/></mxCell>'
    )
    doc = make_doc("    " + block)
    result = apply_patch(doc, patch_of(change(block)))
    assert parse_document(result.result_text).cell_by_id("2") is None


def test_identity_patch_is_noop(minimal_snippet):
    frag = '<mxCell id="0"/>'
    result = apply_patch(minimal_snippet, patch_of(change(frag, frag)))
    assert result.result_text == minimal_snippet


def test_ambiguous_exact_match_errors():
    with pytest.raises(AmbiguousExactError) as exc:
        apply_patch("aba aba", patch_of(change("aba", "x")))
    assert exc.value.change_index == 0


def test_no_match_carries_change_index():
    with pytest.raises(NoMatchError) as exc:
        apply_patch("abc", patch_of(change("a", "a"), change("zzz", "q")))
    assert exc.value.change_index == 1


def test_changes_apply_in_order():
    result = apply_patch("ab", patch_of(change("a", "b"), change("bb", "c")))
    assert result.result_text == "c"


def test_fuzzy_match_survives_reindentation():
    frag = '<mxCell id="2"\n        vertex="1"\n        parent="1"/>'
    doc = make_doc('    <mxCell id="2" vertex="1" parent="1"/>')
    result = apply_patch(doc, patch_of(change(frag, '<mxCell id="9" vertex="1" parent="1"/>')))
    assert result.applied[0].match_mode == "fuzzy"
    assert 'id="9"' in result.result_text
    assert 'id="2"' not in result.result_text


def test_canonicalize_collapses_whitespace():
    a = canonicalize_fragment('<mxCell  id="2"\n   vertex="1"/>')
    b = canonicalize_fragment('<mxCell id="2" vertex="1"/>')
    assert a == b
    # Spaces next to markup punctuation are dropped entirely.
    assert canonicalize_fragment("< a >") == canonicalize_fragment("<a>")
    assert canonicalize_fragment("x = 1") == canonicalize_fragment("x=1")


def test_fuzzy_relocation_property():
    # 200 randomized cases: a fragment re-indented with arbitrary whitespace
    # still matches, and the fuzzy result equals the exact result after
    # canonicalization.
    rng = random.Random(20240817)
    for case in range(200):
        n = rng.randint(2, 6)
        cells = []
        for i in range(n):
            cells.append(
                f'    <mxCell id="{i + 2}" value="N{i}" vertex="1" parent="1">'
                f'<mxGeometry x="{i * 80}" y="{rng.randint(0, 40) * 10}" '
                f'width="60" height="40" as="geometry"/></mxCell>'
            )
        doc = make_doc("\n".join(cells))
        pick = rng.randrange(n)
        fragment = cells[pick].strip()
        replacement = fragment.replace(f'value="N{pick}"', f'value="M{case}"')

        exact = apply_patch(doc, patch_of(change(fragment, replacement)))
        assert exact.applied[0].match_mode == "exact"

        # Re-indent: scatter newlines and runs of spaces between attributes.
        parts = fragment.split(" ")
        fuzzy_fragment = parts[0]
        for part in parts[1:]:
            fuzzy_fragment += rng.choice([" ", "  ", "\n", "\n      ", " \t "]) + part
        fuzzy = apply_patch(doc, patch_of(change(fuzzy_fragment, replacement)))
        assert fuzzy.applied[0].match_mode == "fuzzy"
        assert canonicalize_fragment(fuzzy.result_text) == canonicalize_fragment(
            exact.result_text
        )


def test_category_list_is_closed():
    assert len(ATOMIC_CATEGORIES) == 14
    assert len(set(ATOMIC_CATEGORIES)) == 14


def classify(before, after):
    return classify_changes(parse_document(before), parse_document(after))


def test_classify_node_color():
    before = make_doc(
        '    <mxCell id="2" vertex="1" parent="1" style="rounded=0;fillColor=#FF0000;">'
        '<mxGeometry x="0" y="0" width="40" height="40" as="geometry"/></mxCell>'
    )
    ops = classify(before, before.replace("#FF0000", "#0000FF"))
    assert [op.category for op in ops] == ["node_color"]


def test_classify_node_text_and_move():
    before = make_doc(
        '    <mxCell id="2" value="A" vertex="1" parent="1">'
        '<mxGeometry x="0" y="0" width="40" height="40" as="geometry"/></mxCell>'
    )
    after = before.replace('value="A"', 'value="B"').replace('x="0"', 'x="50"')
    assert {op.category for op in classify(before, after)} == {"node_text", "node_move"}


def test_classify_shape_size_delete_add():
    before = make_doc(
        '    <mxCell id="2" vertex="1" parent="1" style="rounded=1;">'
        '<mxGeometry x="0" y="0" width="40" height="40" as="geometry"/></mxCell>\n'
        '    <mxCell id="3" vertex="1" parent="1">'
        '<mxGeometry x="100" y="0" width="40" height="40" as="geometry"/></mxCell>'
    )
    after = make_doc(
        '    <mxCell id="2" vertex="1" parent="1" style="ellipse;">'
        '<mxGeometry x="0" y="0" width="80" height="40" as="geometry"/></mxCell>\n'
        '    <mxCell id="4" vertex="1" parent="1">'
        '<mxGeometry x="200" y="0" width="40" height="40" as="geometry"/></mxCell>'
    )
    got = {op.category for op in classify(before, after)}
    assert got == {"node_shape", "node_size", "node_delete", "node_add"}


def test_classify_edge_operations():
    before = make_doc(
        '    <mxCell id="2" vertex="1" parent="1">'
        '<mxGeometry x="0" y="0" width="40" height="40" as="geometry"/></mxCell>\n'
        '    <mxCell id="3" vertex="1" parent="1">'
        '<mxGeometry x="100" y="0" width="40" height="40" as="geometry"/></mxCell>\n'
        '    <mxCell id="4" vertex="1" parent="1">'
        '<mxGeometry x="200" y="0" width="40" height="40" as="geometry"/></mxCell>\n'
        '    <mxCell id="5" edge="1" parent="1" source="2" target="3" '
        'style="endArrow=block;dashed=0;">'
        '<mxGeometry relative="1" as="geometry"/></mxCell>'
    )
    after = before.replace('target="3"', 'target="4"').replace(
        "endArrow=block;dashed=0;", "endArrow=oval;dashed=1;"
    )
    got = {op.category for op in classify(before, after)}
    assert got == {"edge_redirect", "edge_arrow", "edge_style"}


def test_classify_edge_path_update():
    before = make_doc(
        '    <mxCell id="3" edge="1" parent="1">'
        '<mxGeometry relative="1" as="geometry">'
        '<mxPoint x="0" y="0" as="sourcePoint"/><mxPoint x="50" y="0" as="targetPoint"/>'
        "</mxGeometry></mxCell>"
    )
    after = before.replace('x="50"', 'x="90"')
    assert [op.category for op in classify(before, after)] == ["edge_path_update"]


def test_classify_reports_every_category_member():
    # Every category emitted by the classifier is from the closed taxonomy.
    before = make_doc(
        '    <mxCell id="2" value="A" vertex="1" parent="1" style="rounded=1;fillColor=#fff;">'
        '<mxGeometry x="0" y="0" width="40" height="40" as="geometry"/></mxCell>'
    )
    after = make_doc(
        '    <mxCell id="2" value="B" vertex="1" parent="1" style="ellipse;fillColor=#000;">'
        '<mxGeometry x="10" y="10" width="50" height="50" as="geometry"/></mxCell>'
    )
    for op in classify(before, after):
        assert op.category in ATOMIC_CATEGORIES
