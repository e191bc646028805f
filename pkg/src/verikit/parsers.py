"""Convert raw model text into structured responses.

Every parser is total: arbitrary input yields a structured result or a
ParseFailure, never an exception. Failures degrade to reward-zero outcomes
downstream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Iterator, Union

from .core import BoundingBox, TimeSpan, boxes_map_from_json, boxes_map_to_json


@dataclass(frozen=True)
class DetectionVerdict:
    verdict: str  # "real" or "fake"
    had_answer_tags: bool


@dataclass(frozen=True)
class GroundingResult:
    time: TimeSpan
    boxes: dict[int, BoundingBox]

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", dict(self.boxes))


@dataclass(frozen=True)
class TrackingResult:
    boxes: dict[int, BoundingBox]

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", dict(self.boxes))


@dataclass(frozen=True)
class CountingResult:
    circles: int
    squares: int
    triangles: int

    def __post_init__(self) -> None:
        for name in ("circles", "squares", "triangles"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ValueError(f"{name} count must be a non-negative integer, got {v!r}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.circles, self.squares, self.triangles)


@dataclass(frozen=True)
class ArtifactBoxes:
    """Unordered box list from the artifact-localization prompt (one timestamp)."""

    boxes: tuple[BoundingBox, ...]


@dataclass(frozen=True)
class JudgeVerdict:
    analysis: str
    decision: str  # "A", "B" or "C"


@dataclass(frozen=True)
class ParseFailure:
    task: str
    reason: str


ParsedResponse = Union[
    DetectionVerdict,
    GroundingResult,
    TrackingResult,
    CountingResult,
    ArtifactBoxes,
    JudgeVerdict,
    ParseFailure,
]

_ANSWER_TAG_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_VERDICT_RE = re.compile(r"\b(real|fake)\b", re.IGNORECASE)
_COUNT_TRIPLE_RE = re.compile(r"(?<![\d.])(\d+)\s*,\s*(\d+)\s*,\s*(\d+)(?![\d.])")
_JUDGMENT_TOKEN_RE = re.compile(r"\[\[(A|B|C)\]\]")

# Pathological inputs (walls of braces) make the balanced scan quadratic;
# model outputs are far below this cap.
_MAX_SCAN_CHARS = 200_000


def extract_answer_tag(text: str) -> tuple[str | None, bool]:
    """Content of the first well-formed <answer>...</answer> pair.

    Returns (inner_text, True) when a pair exists, (None, False) otherwise
    (missing opening or closing tag, or closing before opening).
    """
    match = _ANSWER_TAG_RE.search(text)
    if match is None:
        return None, False
    return match.group(1), True


def _iter_json_objects(text: str) -> Iterator[dict[str, Any]]:
    """Yield each parseable JSON object literal in order of its opening brace.

    Nested objects are yielded after their enclosing object, so "first object
    containing key K" resolves outermost-first.
    """
    text = text[:_MAX_SCAN_CHARS]
    n = len(text)
    i = 0
    while i < n:
        if text[i] != "{":
            i += 1
            continue
        depth = 0
        in_str = False
        escaped = False
        for j in range(i, n):
            c = text[j]
            if in_str:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_str = False
            elif c == '"':
                in_str = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(text[i : j + 1])
                    except json.JSONDecodeError:
                        obj = None
                    if isinstance(obj, dict):
                        yield obj
                    break
        i += 1


def parse_detection(text: str) -> ParsedResponse:
    """Verdict from the answer-tag content, falling back to the whole text.

    The fallback keeps the accuracy and format signals independent: a missing
    tag costs the format bonus, not the verdict.
    """
    inner, had_tags = extract_answer_tag(text)
    haystack = inner if had_tags else text
    tokens = {m.group(1).lower() for m in _VERDICT_RE.finditer(haystack or "")}
    if len(tokens) != 1:
        return ParseFailure("detection", "ambiguous/absent verdict")
    return DetectionVerdict(verdict=tokens.pop(), had_answer_tags=had_tags)


def parse_grounding(text: str) -> ParsedResponse:
    """First object literal with "time" (2-array) and "boxes" (second-keyed map)."""
    for obj in _iter_json_objects(text):
        if "time" not in obj or "boxes" not in obj:
            continue
        try:
            span = TimeSpan.from_list(obj["time"])
            boxes = boxes_map_from_json(obj["boxes"])
        except ValueError as exc:
            return ParseFailure("grounding", str(exc))
        return GroundingResult(time=span, boxes=boxes)
    return ParseFailure("grounding", "no object with time and boxes keys")


def parse_tracking(text: str) -> ParsedResponse:
    """First object literal with a second-keyed "boxes" map."""
    for obj in _iter_json_objects(text):
        if "boxes" not in obj:
            continue
        try:
            boxes = boxes_map_from_json(obj["boxes"])
        except ValueError as exc:
            return ParseFailure("tracking", str(exc))
        return TrackingResult(boxes=boxes)
    return ParseFailure("tracking", "no object with boxes key")


def parse_counting(text: str) -> ParsedResponse:
    """Last triple of comma-separated non-negative integers in the text.

    Chain-of-thought output routinely contains earlier incidental numbers, so
    the final triple is taken as the answer.
    """
    matches = list(_COUNT_TRIPLE_RE.finditer(text))
    if not matches:
        return ParseFailure("counting", "no comma-separated count triple")
    last = matches[-1]
    try:
        circles, squares, triangles = (int(last.group(k)) for k in (1, 2, 3))
        return CountingResult(circles=circles, squares=squares, triangles=triangles)
    except ValueError as exc:
        return ParseFailure("counting", str(exc))


def parse_artifact_grounding(text: str) -> ParsedResponse:
    """First object literal whose "boxes" value is a list of 4-number boxes."""
    for obj in _iter_json_objects(text):
        if "boxes" not in obj:
            continue
        raw = obj["boxes"]
        if not isinstance(raw, list):
            return ParseFailure("artifact_grounding", "boxes must be a list of boxes")
        try:
            boxes = tuple(BoundingBox.from_list(b) for b in raw)
        except ValueError as exc:
            return ParseFailure("artifact_grounding", str(exc))
        return ArtifactBoxes(boxes=boxes)
    return ParseFailure("artifact_grounding", "no object with boxes key")


def parse_judgment(text: str) -> ParsedResponse:
    """First object with "analysis" and "judgment"; decision token must be
    bracketed ([[A]], [[B]] or [[C]])."""
    for obj in _iter_json_objects(text):
        if "analysis" not in obj or "judgment" not in obj:
            continue
        analysis = obj["analysis"]
        judgment = obj["judgment"]
        if not isinstance(analysis, str) or not isinstance(judgment, str):
            return ParseFailure("judgment", "analysis and judgment must be strings")
        token = _JUDGMENT_TOKEN_RE.search(judgment)
        if token is None:
            return ParseFailure("judgment", "no bracketed [[A]]/[[B]]/[[C]] token")
        return JudgeVerdict(analysis=analysis, decision=token.group(1))
    return ParseFailure("judgment", "no object with analysis and judgment keys")


_TASK_PARSERS = {
    "detection": parse_detection,
    "grounding": parse_grounding,
    "tracking": parse_tracking,
    "counting": parse_counting,
    "artifact_grounding": parse_artifact_grounding,
}


def parse_response(task: str, text: str) -> ParsedResponse:
    """Dispatch raw text to the parser for the given task."""
    try:
        parser = _TASK_PARSERS[task]
    except KeyError:
        raise ValueError(f"unknown task {task!r}") from None
    return parser(text)


def response_to_record(resp: ParsedResponse) -> dict[str, Any]:
    """JSON-friendly view of a parsed response, tagged with its variant."""
    if isinstance(resp, DetectionVerdict):
        return {
            "type": "detection",
            "verdict": resp.verdict,
            "had_answer_tags": resp.had_answer_tags,
        }
    if isinstance(resp, GroundingResult):
        return {
            "type": "grounding",
            "time": resp.time.as_list(),
            "boxes": boxes_map_to_json(resp.boxes),
        }
    if isinstance(resp, TrackingResult):
        return {"type": "tracking", "boxes": boxes_map_to_json(resp.boxes)}
    if isinstance(resp, CountingResult):
        return {
            "type": "counting",
            "circles": resp.circles,
            "squares": resp.squares,
            "triangles": resp.triangles,
        }
    if isinstance(resp, ArtifactBoxes):
        return {"type": "artifact_boxes", "boxes": [b.as_list() for b in resp.boxes]}
    if isinstance(resp, JudgeVerdict):
        return {"type": "judgment", "analysis": resp.analysis, "decision": resp.decision}
    if isinstance(resp, ParseFailure):
        return {"type": "parse_failure", "task": resp.task, "reason": resp.reason}
    raise ValueError(f"unknown response type {type(resp).__name__}")


def serialize_response(resp: ParsedResponse) -> str:
    """Canonical text for a structured response; reparsing yields an equal value."""
    if isinstance(resp, DetectionVerdict):
        return f"<answer>{resp.verdict}</answer>" if resp.had_answer_tags else resp.verdict
    if isinstance(resp, GroundingResult):
        return json.dumps({"time": resp.time.as_list(), "boxes": boxes_map_to_json(resp.boxes)})
    if isinstance(resp, TrackingResult):
        return json.dumps({"boxes": boxes_map_to_json(resp.boxes)})
    if isinstance(resp, CountingResult):
        return f"{resp.circles},{resp.squares},{resp.triangles}"
    if isinstance(resp, ArtifactBoxes):
        return json.dumps({"boxes": [b.as_list() for b in resp.boxes]})
    if isinstance(resp, JudgeVerdict):
        return json.dumps({"analysis": resp.analysis, "judgment": f"[[{resp.decision}]]"})
    raise ValueError(f"cannot serialize {type(resp).__name__}")
