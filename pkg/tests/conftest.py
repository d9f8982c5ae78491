import pathlib

import pytest

DATA_DIR = pathlib.Path(__file__).parent / "data"

MINIMAL_SNIPPET = """<mxGraph>
  <root>
    <mxCell id="0"/>
    <mxCell id="1" parent="0"/>
    <mxCell id="2" value="Process" style="rounded=1;" vertex="1" parent="1">
      <mxGeometry x="60" y="40" width="120" height="60" as="geometry"/>
    </mxCell>
    <mxCell id="3" edge="1" parent="1" source="2" target="4">
      <mxGeometry relative="1" as="geometry">
        <mxPoint x="120" y="100" as="targetPoint"/>
      </mxGeometry>
    </mxCell>
    <mxCell id="4" value="Output" vertex="1" parent="1">
      <mxGeometry x="260" y="40" width="120" height="60" as="geometry"/>
    </mxCell>
  </root>
</mxGraph>
"""


@pytest.fixture
def minimal_snippet():
    return MINIMAL_SNIPPET


@pytest.fixture
def dataset_dir():
    return DATA_DIR / "dataset"


@pytest.fixture
def task1_candidates():
    return DATA_DIR / "candidates_task1"


@pytest.fixture
def task1_clean_candidates():
    return DATA_DIR / "candidates_task1_clean"


@pytest.fixture
def task2_candidates():
    return DATA_DIR / "candidates_task2"


def make_doc(cells_xml: str) -> str:
    return (
        '<mxGraphModel>\n  <root>\n    <mxCell id="0"/>\n    <mxCell id="1" parent="0"/>\n'
        + cells_xml
        + "\n  </root>\n</mxGraphModel>"
    )
