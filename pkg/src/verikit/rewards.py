"""Task rewards computed from parsed responses and ground truth.

Perception rewards live in [0, 1]; the detection reward is
accuracy + alpha * format and takes exactly the values {0, alpha, 1, 1+alpha}.
A ParseFailure always scores 0: malformed output must never out-earn a wrong
but well-formed answer.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .core import (
    BoundingBox,
    DatasetManifest,
    LossConfig,
    ManifestEntry,
    TimeSpan,
    boxes_map_from_json,
    read_jsonl,
)
from .geometry import SecondIndexedBoxes, box_iou, mean_box_iou, span_iou
from .parsers import (
    ArtifactBoxes,
    CountingResult,
    DetectionVerdict,
    GroundingResult,
    ParseFailure,
    ParsedResponse,
    TrackingResult,
    parse_response,
)


@dataclass(frozen=True)
class RewardRecord:
    id: str
    task: str
    reward: float
    components: Mapping[str, float]
    parse_ok: bool

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "task": self.task,
            "reward": self.reward,
            "components": dict(self.components),
            "parse_ok": self.parse_ok,
        }


def _zero(task: str, components: Mapping[str, float]) -> RewardRecord:
    return RewardRecord(id="", task=task, reward=0.0, components=dict(components), parse_ok=False)


def track_reward(
    pred: TrackingResult | SecondIndexedBoxes | ParseFailure, gt: SecondIndexedBoxes
) -> RewardRecord:
    """Mean per-second IoU against the ground-truth seconds."""
    if not gt:
        raise ValueError("no reference frames")
    if isinstance(pred, ParseFailure):
        return _zero("tracking", {"spatial": 0.0})
    boxes = pred.boxes if isinstance(pred, TrackingResult) else pred
    spatial = mean_box_iou(boxes, gt)
    return RewardRecord(
        id="", task="tracking", reward=spatial, components={"spatial": spatial}, parse_ok=True
    )


def ground_reward(
    pred: GroundingResult | ParseFailure,
    gt_span: TimeSpan,
    gt_boxes: SecondIndexedBoxes,
) -> RewardRecord:
    """Half temporal IoU plus half mean spatial IoU."""
    if not gt_boxes:
        raise ValueError("no reference frames")
    if isinstance(pred, ParseFailure):
        return _zero("grounding", {"temporal": 0.0, "spatial": 0.0})
    temporal = span_iou(pred.time, gt_span)
    spatial = mean_box_iou(pred.boxes, gt_boxes)
    return RewardRecord(
        id="",
        task="grounding",
        reward=0.5 * temporal + 0.5 * spatial,
        components={"temporal": temporal, "spatial": spatial},
        parse_ok=True,
    )


def count_reward_shape(pred_count: int, gt_count: int, eps: float) -> float:
    """max(0, 1 - |pred - gt| / (gt + eps)); exact zero-count ground truth
    yields 1.0 only for an exact zero prediction."""
    if pred_count < 0 or gt_count < 0:
        raise ValueError("counts must be non-negative")
    if eps <= 0:
        raise ValueError("eps must be > 0")
    return max(0.0, 1.0 - abs(pred_count - gt_count) / (gt_count + eps))


def count_reward(
    pred: CountingResult | ParseFailure, gt: tuple[int, int, int], eps: float = 1e-6
) -> RewardRecord:
    """Per-shape rewards averaged over the three kinds."""
    names = ("circles", "squares", "triangles")
    if isinstance(pred, ParseFailure):
        return _zero("counting", {name: 0.0 for name in names})
    per_shape = {
        name: count_reward_shape(pred_count, gt_count, eps)
        for name, pred_count, gt_count in zip(names, pred.as_tuple(), gt)
    }
    return RewardRecord(
        id="",
        task="counting",
        reward=sum(per_shape.values()) / len(names),
        components=per_shape,
        parse_ok=True,
    )


def detection_reward(
    resp: DetectionVerdict | ParseFailure, gt_label: str, alpha: float = 0.2
) -> RewardRecord:
    """Accuracy indicator plus alpha-weighted format indicator."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if isinstance(resp, ParseFailure):
        return _zero("detection", {"acc": 0.0, "format": 0.0})
    acc = 1.0 if resp.verdict == gt_label else 0.0
    fmt = 1.0 if resp.had_answer_tags else 0.0
    return RewardRecord(
        id="",
        task="detection",
        reward=acc + alpha * fmt,
        components={"acc": acc, "format": fmt},
        parse_ok=True,
    )


def artifact_grounding_reward(
    pred: ArtifactBoxes | ParseFailure, gt_boxes: Sequence[BoundingBox]
) -> RewardRecord:
    """Greedy one-to-one best-IoU matching, averaged over the ground-truth boxes.

    No matching rule is published for this task; greedy best-match is the
    deterministic stand-in, with unmatched ground-truth boxes contributing 0.
    """
    if not gt_boxes:
        raise ValueError("no reference boxes")
    if isinstance(pred, ParseFailure):
        return _zero("artifact_grounding", {"spatial": 0.0})
    pairs = sorted(
        (
            (-box_iou(p, g), i, j)
            for i, p in enumerate(pred.boxes)
            for j, g in enumerate(gt_boxes)
        ),
    )
    used_pred: set[int] = set()
    used_gt: set[int] = set()
    total = 0.0
    for neg_iou, i, j in pairs:
        if i in used_pred or j in used_gt:
            continue
        used_pred.add(i)
        used_gt.add(j)
        total += -neg_iou
    spatial = total / len(gt_boxes)
    return RewardRecord(
        id="",
        task="artifact_grounding",
        reward=spatial,
        components={"spatial": spatial},
        parse_ok=True,
    )


def _entry_gt_boxes(entry: ManifestEntry) -> dict[int, BoundingBox]:
    return boxes_map_from_json(entry.annotation["boxes"])


def score_response(entry: ManifestEntry, raw_text: str, cfg: LossConfig) -> RewardRecord:
    """Parse one raw response and score it against its manifest entry."""
    parsed: ParsedResponse = parse_response(entry.task, raw_text)
    if entry.task == "detection":
        record = detection_reward(parsed, entry.label, cfg.alpha)
    elif entry.task == "grounding":
        record = ground_reward(
            parsed, TimeSpan.from_list(entry.annotation["time"]), _entry_gt_boxes(entry)
        )
    elif entry.task == "tracking":
        record = track_reward(parsed, _entry_gt_boxes(entry))
    elif entry.task == "counting":
        record = count_reward(parsed, tuple(entry.annotation["counts"]), cfg.eps_count)
    elif entry.task == "artifact_grounding":
        gt = [BoundingBox.from_list(b) for b in entry.annotation["boxes"]]
        record = artifact_grounding_reward(parsed, gt)
    else:  # unreachable: entry validation restricts tasks
        raise ValueError(f"unknown task {entry.task!r}")
    return replace(record, id=entry.id)


def score_file(
    responses: str | Path | Sequence[Mapping[str, Any]],
    manifest: DatasetManifest,
    cfg: LossConfig,
) -> list[RewardRecord]:
    """Score a response record file ({id, raw_text} per line) against the manifest.

    Output is ordered by id, so repeated runs are byte-identical.
    """
    if isinstance(responses, (str, Path)):
        records = read_jsonl(responses)
    else:
        records = list(responses)
    entries = manifest.by_id()
    results: list[RewardRecord] = []
    for record in records:
        rid = str(record.get("id", ""))
        if rid not in entries:
            raise ValueError(f"response id {rid!r} not in manifest")
        entry = entries[rid]
        claimed_task = record.get("task")
        if claimed_task is not None and claimed_task != entry.task:
            raise ValueError(
                f"response id {rid!r} claims task {claimed_task!r} but manifest says {entry.task!r}"
            )
        results.append(score_response(entry, str(record.get("raw_text", "")), cfg))
    results.sort(key=lambda r: r.id)
    return results
