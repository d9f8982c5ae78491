import hashlib
import json
import logging

import pytest

from drawio_eval.judge import (
    PROMPT_KINDS,
    CountMismatchError,
    EmptyInstructionError,
    EmptyQuestionsError,
    MissingDimensionsError,
    MissingImageError,
    MockJudge,
    NonBinaryAnswerError,
    ResponseCache,
    ScoreOutOfRangeError,
    TestEmbedder,
    UnparseableResponseError,
    build_codexqa_prompt,
    build_scs_prompt,
    build_xdrfr_decompose_prompt,
    build_xdrfr_verify_prompt,
    load_template,
    mock_judge,
    parse_codexqa_response,
    parse_decompose_response,
    parse_scs_response,
    parse_yes_no,
    run_judge,
    template_sha256,
)
from drawio_eval.metrics import cosine_similarity

from conftest import MINIMAL_SNIPPET

TEMPLATE_HASHES = {
    "codexqa_answer": "27034410aa496d77c022031da81c7c1e5f6b0d868bb71becb79509f9bc41cbda",
    "scs_task1": "49314e7d680d789cd83e79ed9d9e2fb86699d7967ce79d21ff68055e6720a5c1",
    "scs_task2": "49d1ff94a7745fd5e68ac231ff026c2964510cd181ffb7f57a723420eadec6e2",
    "xdrfr_decompose": "b11a4e1ebbdeaa45bcc515cf0463c3341bef9765ccfe3c58b73ad53ffc0ab2d8",
    "xdrfr_verify_batch": "7dbe573147ea0901428004afc0c09292951779c1d24450458a09c42c636de1ed",
    "xdrfr_verify_single": "d492e3aea068a0c56d0a48a9228252c1ceb849113b969615914e759b9eb34608",
}


@pytest.fixture
def images(tmp_path):
    a = tmp_path / "a.png"
    b = tmp_path / "b.png"
    a.write_bytes(b"\x89PNG\r\n")
    b.write_bytes(b"\x89PNG\r\n")
    return str(a), str(b)


def test_template_hashes_are_pinned():
    assert set(TEMPLATE_HASHES) == set(PROMPT_KINDS)
    for kind, expected in TEMPLATE_HASHES.items():
        assert template_sha256(kind) == expected, kind
        assert hashlib.sha256(load_template(kind).encode()).hexdigest() == expected


def test_scs_task1_prompt_contents(images):
    prompt = build_scs_prompt("scs_task1", *images)
    assert prompt.kind == "scs_task1"
    assert "Step 3: Dimension Scoring (0-10 scale)" in prompt.text
    assert "visual_style_consistency" in prompt.text
    assert "layout_consistency" in prompt.text
    assert "aesthetic_quality" in prompt.text
    assert images[0] in prompt.text
    assert prompt.attachments == images


def test_scs_task2_prompt_has_two_dimensions(images):
    prompt = build_scs_prompt("scs_task2", *images)
    assert "style_consistency" in prompt.text
    assert "aesthetic_quality" in prompt.text
    assert "layout_consistency" not in prompt.text


def test_scs_prompt_missing_image(images):
    with pytest.raises(MissingImageError):
        build_scs_prompt("scs_task1", images[0], "/nonexistent/b.png")


def test_codexqa_prompt_numbers_questions():
    prompt = build_codexqa_prompt("<mxGraphModel/>", ["How many?", "Which?", "Who?"])
    assert "Q1: How many?" in prompt.text
    assert "Q3: Who?" in prompt.text
    assert prompt.meta_get("question_count") == 3
    with pytest.raises(EmptyQuestionsError):
        build_codexqa_prompt("<x/>", [])


def test_decompose_prompt_embeds_instruction():
    prompt = build_xdrfr_decompose_prompt("Change the 'Start' node to red")
    assert "Change the 'Start' node to red" in prompt.text
    with pytest.raises(EmptyInstructionError):
        build_xdrfr_decompose_prompt("")


def test_verify_prompt_single_and_batch():
    batch = build_xdrfr_verify_prompt("{}", "do it", ["q1", "q2"], batch=True)
    assert batch.kind == "xdrfr_verify_batch"
    assert "Q1: q1" in batch.text
    single = build_xdrfr_verify_prompt("{}", "do it", ["q1"], batch=False)
    assert single.kind == "xdrfr_verify_single"
    assert "q1" in single.text
    with pytest.raises(EmptyQuestionsError):
        build_xdrfr_verify_prompt("{}", "do it", [], batch=True)


def test_prompts_are_deterministic(images):
    one = build_scs_prompt("scs_task1", *images)
    two = build_scs_prompt("scs_task1", *images)
    assert one.text == two.text


def test_parse_scs_recomputes_final_score():
    raw = json.dumps(
        {
            "dimension_scores": {
                "visual_style_consistency": 8.5,
                "layout_consistency": 7.0,
                "aesthetic_quality": 9.0,
            },
            "final_score": 0.9,
        }
    )
    scores, final = parse_scs_response(raw, "scs_task1")
    assert final == 0.817  # the judge's 0.9 is discarded
    assert scores["layout_consistency"] == 7.0


def test_parse_scs_tolerates_fences_and_chatter():
    raw = (
        "Here is my evaluation.\n```json\n"
        '{"dimension_scores": {"style_consistency": 8.5, "aesthetic_quality": 9.0}}'
        "\n```"
    )
    _, final = parse_scs_response(raw, "scs_task2")
    assert final == 0.875


def test_parse_scs_errors():
    with pytest.raises(UnparseableResponseError):
        parse_scs_response("no json here", "scs_task1")
    with pytest.raises(MissingDimensionsError):
        parse_scs_response('{"dimension_scores": {"layout_consistency": 5}}', "scs_task1")
    raw = json.dumps(
        {
            "dimension_scores": {
                "visual_style_consistency": 15,
                "layout_consistency": 7,
                "aesthetic_quality": 9,
            }
        }
    )
    with pytest.raises(ScoreOutOfRangeError):
        parse_scs_response(raw, "scs_task1")


def test_parse_codexqa_response():
    answers = parse_codexqa_response('{"Q1": "3", "Q2": "Start"}', 2)
    assert answers == {"Q1": "3", "Q2": "Start"}
    with pytest.raises(CountMismatchError):
        parse_codexqa_response('{"Q1": "3"}', 2)


def test_parse_decompose_truncates_to_five(caplog):
    raw = json.dumps({"decomposed_questions": [f"q{i}?" for i in range(8)]})
    with caplog.at_level(logging.WARNING, logger="drawio_eval.judge"):
        result = parse_decompose_response(raw, "instr")
    assert len(result.questions) == 5
    assert "truncating" in caplog.text


def test_parse_yes_no():
    raw = json.dumps({"answers": [{"question": "a", "answer": "Yes"}, {"question": "b", "answer": "no"}]})
    assert parse_yes_no(raw, 2) == ["Yes", "No"]
    assert parse_yes_no('{"answer": "yes"}', 1) == ["Yes"]
    with pytest.raises(CountMismatchError):
        parse_yes_no(raw, 3)
    with pytest.raises(NonBinaryAnswerError):
        parse_yes_no('{"answer": "Probably"}', 1)


def test_mock_judge_is_deterministic_and_parseable(images):
    backend = MockJudge()
    scs_prompt = build_scs_prompt("scs_task1", *images)
    assert backend.complete(scs_prompt) == backend.complete(scs_prompt)
    _, final = parse_scs_response(backend.complete(scs_prompt), "scs_task1")
    assert final == 0.8

    qa_prompt = build_codexqa_prompt("<x/>", ["one", "two"])
    answers = parse_codexqa_response(backend.complete(qa_prompt), 2)
    assert answers == {"Q1": "MOCK", "Q2": "MOCK"}

    dec_prompt = build_xdrfr_decompose_prompt("move the box")
    decomposed = parse_decompose_response(backend.complete(dec_prompt), "move the box")
    assert len(decomposed.questions) == 2
    assert "move the box" in decomposed.questions[0]

    verify = build_xdrfr_verify_prompt("{}", "move", ["a", "b", "c", "d"], batch=True)
    assert parse_yes_no(backend.complete(verify), 4) == ["Yes"] * 4


def test_mock_judge_via_run_judge(images):
    prompt = build_scs_prompt("scs_task2", *images)
    response = mock_judge(prompt)
    assert response.parsed[1] == 0.8


def test_run_judge_retries_then_raises():
    class Flaky:
        identity = "flaky"

        def __init__(self):
            self.calls = 0

        def complete(self, prompt):
            self.calls += 1
            return "garbage"

    backend = Flaky()
    prompt = build_xdrfr_decompose_prompt("x")
    with pytest.raises(UnparseableResponseError):
        run_judge(backend, prompt, lambda raw: parse_decompose_response(raw, "x"))
    assert backend.calls == 3  # first attempt + 2 retries


def test_response_cache_short_circuits(tmp_path):
    class Counting:
        identity = "count"

        def __init__(self):
            self.calls = 0

        def complete(self, prompt):
            self.calls += 1
            return MockJudge().complete(prompt)

    cache = ResponseCache(str(tmp_path / "cache"))
    backend = Counting()
    prompt = build_xdrfr_decompose_prompt("cache me")
    parser = lambda raw: parse_decompose_response(raw, "cache me")
    first = run_judge(backend, prompt, parser, cache=cache)
    second = run_judge(backend, prompt, parser, cache=cache)
    assert backend.calls == 1
    assert first.raw == second.raw


def test_embedder_blank_canvas_is_background():
    empty = (
        '<mxGraphModel><root><mxCell id="0"/><mxCell id="1" parent="0"/></root></mxGraphModel>'
    )
    vec = TestEmbedder().embed(empty)
    assert len(vec) == 256
    assert all(v == 1.0 for v in vec)


def test_embedder_identical_inputs_identical_vectors():
    embedder = TestEmbedder()
    assert embedder.embed(MINIMAL_SNIPPET) == embedder.embed(MINIMAL_SNIPPET)


def test_embedder_detects_moved_box():
    embedder = TestEmbedder()
    moved = MINIMAL_SNIPPET.replace('x="260"', 'x="460"')
    value = cosine_similarity(embedder.embed(MINIMAL_SNIPPET), embedder.embed(moved))
    assert value < 1.0
