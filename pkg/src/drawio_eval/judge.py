"""Judge prompts, backends, and response parsing.

Prompt templates are shipped as text assets and instantiated by literal
placeholder substitution, so the rendered text is byte-stable. Judge output
is never trusted for arithmetic: final scores are recomputed locally from
the parsed dimension scores.
"""
from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .metrics import aggregate_scs
from .model import parse_document
from .patch import strip_code_fences
from .render import resolve_scene

__all__ = [
    "JudgePrompt",
    "JudgeResponse",
    "DecomposedInstruction",
    "PromptError",
    "MissingImageError",
    "EmptyQuestionsError",
    "EmptyInstructionError",
    "UnparseableResponseError",
    "MissingDimensionsError",
    "ScoreOutOfRangeError",
    "CountMismatchError",
    "NonBinaryAnswerError",
    "BackendUnavailableError",
    "load_template",
    "template_sha256",
    "build_scs_prompt",
    "build_codexqa_prompt",
    "build_xdrfr_decompose_prompt",
    "build_xdrfr_verify_prompt",
    "parse_scs_response",
    "parse_codexqa_response",
    "parse_decompose_response",
    "parse_yes_no",
    "MockJudge",
    "HttpJudge",
    "run_judge",
    "TestEmbedder",
    "HttpEmbedder",
]

log = logging.getLogger(__name__)

API_KEY_ENV = "VCG_JUDGE_API_KEY"
MAX_DECOMPOSED_QUESTIONS = 5

PROMPT_KINDS = (
    "scs_task1",
    "scs_task2",
    "codexqa_answer",
    "xdrfr_decompose",
    "xdrfr_verify_single",
    "xdrfr_verify_batch",
)

SCS_DIMENSIONS = {
    "scs_task1": ("visual_style_consistency", "layout_consistency", "aesthetic_quality"),
    "scs_task2": ("style_consistency", "aesthetic_quality"),
}


class PromptError(ValueError):
    pass


class MissingImageError(PromptError):
    pass


class EmptyQuestionsError(PromptError):
    pass


class EmptyInstructionError(PromptError):
    pass


class ResponseError(ValueError):
    pass


class UnparseableResponseError(ResponseError):
    pass


class MissingDimensionsError(ResponseError):
    pass


class ScoreOutOfRangeError(ResponseError):
    pass


class CountMismatchError(ResponseError):
    pass


class NonBinaryAnswerError(ResponseError):
    pass


class BackendUnavailableError(RuntimeError):
    pass


@dataclass(frozen=True)
class JudgePrompt:
    kind: str
    text: str
    attachments: tuple[str, ...] = ()
    # Structured inputs the mock backend and parsers need (question count,
    # question texts); never sent to an HTTP backend.
    meta: tuple[tuple[str, object], ...] = ()

    def meta_get(self, key: str, default=None):
        for k, v in self.meta:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class JudgeResponse:
    raw: str
    parsed: object


@dataclass(frozen=True)
class DecomposedInstruction:
    instruction: str
    questions: tuple[str, ...]


def load_template(kind: str) -> str:
    if kind not in PROMPT_KINDS:
        raise PromptError(f"unknown prompt kind {kind!r}")
    return resources.files("drawio_eval.prompts").joinpath(f"{kind}.txt").read_text("utf-8")


def template_sha256(kind: str) -> str:
    return hashlib.sha256(load_template(kind).encode("utf-8")).hexdigest()


def _fill(template: str, values: dict[str, str]) -> str:
    # Templates contain literal JSON braces, so substitution is plain
    # replacement of known {placeholder} tokens, not str.format.
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


def build_scs_prompt(kind: str, original_image: str, candidate_image: str) -> JudgePrompt:
    """Visual-consistency scoring prompt; three dimensions for generation
    scoring, two for edit scoring."""
    if kind not in ("scs_task1", "scs_task2"):
        raise PromptError(f"not an SCS kind: {kind!r}")
    for path in (original_image, candidate_image):
        if not Path(path).exists():
            raise MissingImageError(f"image not found: {path}")
    if kind == "scs_task1":
        values = {"original_path": original_image, "generated_path": candidate_image}
    else:
        values = {
            "gemini_rendered_path": original_image,
            "modified_rendered_path": candidate_image,
        }
    return JudgePrompt(
        kind=kind,
        text=_fill(load_template(kind), values),
        attachments=(original_image, candidate_image),
    )


def _numbered(questions: Sequence[str]) -> str:
    return "\n".join(f"Q{i}: {q}" for i, q in enumerate(questions, start=1))


def build_codexqa_prompt(generated_xml: str, questions: Sequence[str]) -> JudgePrompt:
    if not questions:
        raise EmptyQuestionsError("no questions")
    text = _fill(
        load_template("codexqa_answer"),
        {"generated_xml": generated_xml, "questions_text": _numbered(questions)},
    )
    return JudgePrompt(
        kind="codexqa_answer",
        text=text,
        meta=(("question_count", len(questions)),),
    )


def build_xdrfr_decompose_prompt(instruction: str) -> JudgePrompt:
    if not instruction:
        raise EmptyInstructionError("empty instruction")
    text = _fill(load_template("xdrfr_decompose"), {"instruction": instruction})
    return JudgePrompt(kind="xdrfr_decompose", text=text, meta=(("instruction", instruction),))


def build_xdrfr_verify_prompt(
    model_output_json: str,
    instruction: str,
    questions: Sequence[str],
    batch: bool,
) -> JudgePrompt:
    if not questions:
        raise EmptyQuestionsError("no questions")
    if batch:
        text = _fill(
            load_template("xdrfr_verify_batch"),
            {
                "model_output_json_str": model_output_json,
                "instruction": instruction,
                "questions_text": _numbered(questions),
            },
        )
        kind = "xdrfr_verify_batch"
    else:
        if len(questions) != 1:
            raise PromptError("single-question prompt takes exactly one question")
        text = _fill(
            load_template("xdrfr_verify_single"),
            {
                "model_output_json_str": model_output_json,
                "instruction": instruction,
                "question": questions[0],
            },
        )
        kind = "xdrfr_verify_single"
    return JudgePrompt(
        kind=kind,
        text=text,
        meta=(("question_count", len(questions)), ("questions", tuple(questions))),
    )


def _extract_json(raw: str) -> object:
    """First JSON object in a possibly fenced / chatty response."""
    text = strip_code_fences(raw)
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    start = text.find("{")
    if start < 0:
        raise UnparseableResponseError("no JSON object in response")
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", text):
        try:
            obj, _ = decoder.raw_decode(text, match.start())
            return obj
        except json.JSONDecodeError:
            continue
    raise UnparseableResponseError("no parseable JSON object in response")


def _find_key(obj: object, key: str):
    """Depth-first search for a key in nested dicts/lists."""
    if isinstance(obj, dict):
        if key in obj:
            return obj[key]
        for value in obj.values():
            found = _find_key(value, key)
            if found is not None:
                return found
    elif isinstance(obj, list):
        for item in obj:
            found = _find_key(item, key)
            if found is not None:
                return found
    return None


def parse_scs_response(raw: str, kind: str) -> tuple[dict[str, float], float]:
    """Extract dimension scores; the final score is recomputed locally and
    any judge-supplied final_score is ignored."""
    data = _extract_json(raw)
    scores_obj = _find_key(data, "dimension_scores")
    if not isinstance(scores_obj, dict):
        raise MissingDimensionsError("response has no dimension_scores object")
    expected = SCS_DIMENSIONS[kind]
    scores: dict[str, float] = {}
    for name in expected:
        if name not in scores_obj:
            raise MissingDimensionsError(f"missing dimension {name!r}")
        try:
            value = float(scores_obj[name])
        except (TypeError, ValueError) as exc:
            raise ScoreOutOfRangeError(f"dimension {name!r} is not numeric") from exc
        if not 0 <= value <= 10:
            raise ScoreOutOfRangeError(f"dimension {name!r}={value} outside [0, 10]")
        scores[name] = value
    final = aggregate_scs([scores[name] for name in expected])
    return scores, final


def parse_codexqa_response(raw: str, expected_count: int) -> dict[str, str]:
    data = _extract_json(raw)
    if not isinstance(data, dict):
        raise UnparseableResponseError("answer map must be a JSON object")
    answers: dict[str, str] = {}
    for i in range(1, expected_count + 1):
        key = f"Q{i}"
        if key not in data:
            raise CountMismatchError(f"missing answer {key}")
        answers[key] = str(data[key])
    return answers


def parse_decompose_response(raw: str, instruction: str) -> DecomposedInstruction:
    data = _extract_json(raw)
    questions = _find_key(data, "decomposed_questions")
    if not isinstance(questions, list) or not questions:
        raise UnparseableResponseError("response has no decomposed_questions list")
    texts = [str(q) for q in questions]
    if len(texts) > MAX_DECOMPOSED_QUESTIONS:
        log.warning(
            "decomposition produced %d questions; truncating to %d",
            len(texts),
            MAX_DECOMPOSED_QUESTIONS,
        )
        texts = texts[:MAX_DECOMPOSED_QUESTIONS]
    return DecomposedInstruction(instruction, tuple(texts))


def parse_yes_no(raw: str, expected_count: int) -> list[str]:
    """Yes/No answers in question order; anything else is an error."""
    if expected_count < 1:
        raise ValueError("expected_count must be >= 1")
    data = _extract_json(raw)
    if isinstance(data, dict) and "answer" in data and "answers" not in data:
        raw_answers = [data["answer"]]
    else:
        answers_obj = _find_key(data, "answers")
        if not isinstance(answers_obj, list):
            raise UnparseableResponseError("response has no answers list")
        raw_answers = [
            item.get("answer") if isinstance(item, dict) else item for item in answers_obj
        ]
    if len(raw_answers) != expected_count:
        raise CountMismatchError(f"expected {expected_count} answers, got {len(raw_answers)}")
    out = []
    for answer in raw_answers:
        norm = str(answer).strip().casefold()
        if norm == "yes":
            out.append("Yes")
        elif norm == "no":
            out.append("No")
        else:
            raise NonBinaryAnswerError(f"answer {answer!r} is not Yes/No")
    return out


class MockJudge:
    """Deterministic offline judge: fixed scores and answers per prompt kind,
    byte-identical across runs."""

    identity = "mock"

    def complete(self, prompt: JudgePrompt) -> str:
        if prompt.kind in ("scs_task1", "scs_task2"):
            dims = {name: 8.0 for name in SCS_DIMENSIONS[prompt.kind]}
            return json.dumps(
                {"analysis": {"dimension_scores": dims}, "final_score": 0.8},
                sort_keys=True,
            )
        if prompt.kind == "codexqa_answer":
            count = prompt.meta_get("question_count", 1)
            return json.dumps(
                {f"Q{i}": "MOCK" for i in range(1, count + 1)}, sort_keys=True
            )
        if prompt.kind == "xdrfr_decompose":
            instruction = prompt.meta_get("instruction", "")
            return json.dumps(
                {
                    "decomposed_questions": [
                        f"Was the modification described by '{instruction}' applied? (check 1)",
                        f"Was the modification described by '{instruction}' applied? (check 2)",
                    ]
                }
            )
        if prompt.kind in ("xdrfr_verify_single", "xdrfr_verify_batch"):
            questions = prompt.meta_get("questions", ())
            if prompt.kind == "xdrfr_verify_single":
                return json.dumps({"answer": "Yes"})
            return json.dumps(
                {"answers": [{"question": q, "answer": "Yes"} for q in questions]}
            )
        raise PromptError(f"unknown prompt kind {prompt.kind!r}")


class HttpJudge:
    """OpenAI-compatible chat-completions backend.

    Text and image parts are posted to ``{base_url}/chat/completions`` with
    temperature 0; credentials come from the VCG_JUDGE_API_KEY environment
    variable. At most ``concurrency`` requests are in flight at once.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        temperature: float = 0.0,
        max_tokens: int = 4096,
        concurrency: int = 4,
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        self._semaphore = threading.Semaphore(concurrency)
        self.identity = f"http:{model}"

    def _content_parts(self, prompt: JudgePrompt) -> list[dict]:
        parts: list[dict] = [{"type": "text", "text": prompt.text}]
        for path in prompt.attachments:
            data = Path(path).read_bytes()
            suffix = Path(path).suffix.lstrip(".").lower() or "png"
            mime = "image/svg+xml" if suffix == "svg" else f"image/{suffix}"
            encoded = base64.b64encode(data).decode("ascii")
            parts.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:{mime};base64,{encoded}"},
                }
            )
        return parts

    def complete(self, prompt: JudgePrompt) -> str:
        import requests

        api_key = os.environ.get(API_KEY_ENV)
        if not api_key:
            raise BackendUnavailableError(f"{API_KEY_ENV} is not set")
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": [{"role": "user", "content": self._content_parts(prompt)}],
        }
        with self._semaphore:
            response = requests.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.timeout,
            )
        response.raise_for_status()
        return response.json()["choices"][0]["message"]["content"]


class ResponseCache:
    """Optional on-disk response cache keyed by (prompt hash, judge identity)."""

    def __init__(self, directory: str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, prompt: JudgePrompt, identity: str) -> Path:
        digest = hashlib.sha256(
            (identity + "\x00" + prompt.kind + "\x00" + prompt.text).encode("utf-8")
        ).hexdigest()
        return self.directory / f"{digest}.txt"

    def get(self, prompt: JudgePrompt, identity: str) -> Optional[str]:
        path = self._path(prompt, identity)
        return path.read_text("utf-8") if path.exists() else None

    def put(self, prompt: JudgePrompt, identity: str, raw: str) -> None:
        self._path(prompt, identity).write_text(raw, "utf-8")


def run_judge(backend, prompt: JudgePrompt, parser, *, retries: int = 2, cache=None):
    """Call the backend and parse; a schema-invalid response is retried with
    the identical prompt up to ``retries`` times before the error propagates."""
    identity = getattr(backend, "identity", "unknown")
    if cache is not None:
        cached = cache.get(prompt, identity)
        if cached is not None:
            return JudgeResponse(cached, parser(cached))
    last_error: Optional[Exception] = None
    for _ in range(retries + 1):
        raw = backend.complete(prompt)
        try:
            parsed = parser(raw)
        except ResponseError as exc:
            last_error = exc
            continue
        if cache is not None:
            cache.put(prompt, identity, raw)
        return JudgeResponse(raw, parsed)
    raise last_error


def mock_judge(prompt: JudgePrompt) -> JudgeResponse:
    """One-shot canned completion for a prompt, parsed per its kind."""
    raw = MockJudge().complete(prompt)
    if prompt.kind in ("scs_task1", "scs_task2"):
        parsed: object = parse_scs_response(raw, prompt.kind)
    elif prompt.kind == "codexqa_answer":
        parsed = parse_codexqa_response(raw, prompt.meta_get("question_count", 1))
    elif prompt.kind == "xdrfr_decompose":
        parsed = parse_decompose_response(raw, prompt.meta_get("instruction", ""))
    else:
        parsed = parse_yes_no(raw, prompt.meta_get("question_count", 1))
    return JudgeResponse(raw, parsed)


def embed(backend, source) -> list[float]:
    """Run the configured embedding backend on an image path or XML text."""
    return backend.embed(source)


class TestEmbedder:
    """Deterministic offline embedder: rasterizes the resolved scene onto a
    16x16 grayscale grid (background 1.0, vertex boxes 0.25, edge paths 0.0)
    and returns the 256 intensities."""

    identity = "test-grid-16"
    grid = 16

    def embed(self, source) -> list[float]:
        if isinstance(source, str):
            doc = parse_document(source)
        else:
            doc = source
        scene = resolve_scene(doc)
        canvas = scene.canvas
        n = self.grid
        values = [[1.0] * n for _ in range(n)]

        def to_cell(x: float, y: float) -> tuple[int, int]:
            col = int((x - canvas.x) / canvas.width * n)
            row = int((y - canvas.y) / canvas.height * n)
            return min(max(row, 0), n - 1), min(max(col, 0), n - 1)

        for box in scene.boxes.values():
            r0, c0 = to_cell(box.x, box.y)
            r1, c1 = to_cell(box.x + box.width, box.y + box.height)
            for r in range(r0, r1 + 1):
                for c in range(c0, c1 + 1):
                    values[r][c] = min(values[r][c], 0.25)
        for path in scene.edge_paths.values():
            for a, b in zip(path, path[1:]):
                steps = max(int(max(abs(b.x - a.x), abs(b.y - a.y))), 1)
                for step in range(steps + 1):
                    t = step / steps
                    r, c = to_cell(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
                    values[r][c] = 0.0
        return [v for row in values for v in row]


class HttpEmbedder:
    """Embedding backend posting an image to an HTTP endpoint that returns
    a JSON vector (``{"embedding": [...]}``)."""

    def __init__(self, url: str, *, timeout: float = 120.0):
        self.url = url
        self.timeout = timeout
        self.identity = f"http:{url}"

    def embed(self, source) -> list[float]:
        import requests

        if isinstance(source, (str, Path)) and Path(source).exists():
            data = Path(source).read_bytes()
        elif isinstance(source, str):
            data = source.encode("utf-8")
        else:
            raise BackendUnavailableError("http embedder needs a file path or text")
        encoded = base64.b64encode(data).decode("ascii")
        response = requests.post(self.url, json={"image_b64": encoded}, timeout=self.timeout)
        response.raise_for_status()
        return list(response.json()["embedding"])
