"""Shared domain types, configuration, and dataset record schemas.

Everything here is immutable after construction and safe to share across
threads. File IO is line-delimited JSON (one record per line, UTF-8).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

LABELS = ("real", "fake")
# "fake" is the positive class everywhere metrics are computed.
POSITIVE_LABEL = "fake"

GROUPS = ("ID", "OOD", "OOD-MintVid")

TASKS = ("detection", "grounding", "tracking", "counting", "artifact_grounding")
PERCEPTION_TASKS = ("grounding", "tracking", "counting", "artifact_grounding")

SHAPE_KINDS = ("circle", "square", "triangle")

COORD_MODES = ("pixels", "normalized_1000")


class ManifestError(ValueError):
    """Raised for malformed manifest or record files."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box [x1, y1, x2, y2]; degenerate (zero-area) boxes allowed."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ValueError(f"box coordinate {name} must be a finite number, got {v!r}")
            if v < 0:
                raise ValueError(f"box coordinate {name} must be non-negative, got {v}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(
                f"box corners out of order: [{self.x1}, {self.y1}, {self.x2}, {self.y2}]"
            )

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [float(self.x1), float(self.y1), float(self.x2), float(self.y2)]

    @classmethod
    def from_list(cls, values: Any) -> "BoundingBox":
        if not isinstance(values, (list, tuple)) or len(values) != 4:
            raise ValueError(f"box must be a 4-number array, got {values!r}")
        try:
            coords = [float(v) for v in values]
        except (TypeError, ValueError):
            raise ValueError(f"box must be a 4-number array, got {values!r}") from None
        return cls(*coords)


@dataclass(frozen=True)
class TimeSpan:
    """Closed time interval in seconds."""

    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        for name in ("start_s", "end_s"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ValueError(f"span bound {name} must be a finite number, got {v!r}")
        if self.end_s < self.start_s:
            raise ValueError(f"span end {self.end_s} precedes start {self.start_s}")

    @property
    def length(self) -> float:
        return self.end_s - self.start_s

    def as_list(self) -> list[float]:
        return [float(self.start_s), float(self.end_s)]

    @classmethod
    def from_list(cls, values: Any) -> "TimeSpan":
        if not isinstance(values, (list, tuple)) or len(values) != 2:
            raise ValueError(f"time span must be a 2-number array, got {values!r}")
        try:
            bounds = [float(v) for v in values]
        except (TypeError, ValueError):
            raise ValueError(f"time span must be a 2-number array, got {values!r}") from None
        return cls(*bounds)


@dataclass(frozen=True)
class LossConfig:
    """Knobs shared by the reward and loss computations.

    beta is the preference-loss temperature (no published value; 0.1 default),
    alpha the format-reward weight, eps_count the counting-reward stabilizer,
    eps_clip_low/high the ratio clip bounds, group_size the rollout group
    width, token_normalize selects the per-token loss normalization, and
    advantage_std_floor guards degenerate groups.
    """

    beta: float = 0.1
    alpha: float = 0.2
    eps_count: float = 1e-6
    eps_clip_low: float = 3e-4
    eps_clip_high: float = 4e-4
    group_size: int = 4
    token_normalize: bool = True
    advantage_std_floor: float = 1e-8

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.eps_count <= 0:
            raise ValueError("eps_count must be > 0")
        if not (0 < self.eps_clip_low < 1) or not (0 < self.eps_clip_high < 1):
            raise ValueError("clip epsilons must lie in (0, 1)")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.advantage_std_floor <= 0:
            raise ValueError("advantage_std_floor must be > 0")

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "LossConfig":
        known = {f: obj[f] for f in cls.__dataclass_fields__ if f in obj}
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**known)


def boxes_map_from_json(obj: Any) -> dict[int, BoundingBox]:
    """Decode a {"<second>": [x1, y1, x2, y2]} map with stringified integer keys."""
    if not isinstance(obj, dict):
        raise ValueError(f"boxes must be an object, got {type(obj).__name__}")
    out: dict[int, BoundingBox] = {}
    for key, value in obj.items():
        try:
            second = int(str(key))
        except ValueError:
            raise ValueError(f"boxes key {key!r} is not an integer second") from None
        if str(second) != str(key).strip():
            raise ValueError(f"boxes key {key!r} is not an integer second")
        if second < 0:
            raise ValueError(f"boxes key {key!r} must be non-negative")
        if second in out:
            raise ValueError(f"duplicate second {second} in boxes map")
        out[second] = BoundingBox.from_list(value)
    return out


def boxes_map_to_json(boxes: Mapping[int, BoundingBox]) -> dict[str, list[float]]:
    return {str(k): boxes[k].as_list() for k in sorted(boxes)}


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    media_path: str
    label: str
    subset_name: str
    group: str
    task: str
    annotation: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ManifestError(f"entry {self.id!r}: unknown label {self.label!r}")
        if self.group not in GROUPS:
            raise ManifestError(f"entry {self.id!r}: unknown group {self.group!r}")
        if self.task not in TASKS:
            raise ManifestError(f"entry {self.id!r}: unknown task {self.task!r}")
        try:
            _validate_annotation(self.task, self.annotation)
        except ValueError as exc:
            raise ManifestError(f"entry {self.id!r}: {exc}") from None

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "media_path": self.media_path,
            "label": self.label,
            "subset_name": self.subset_name,
            "group": self.group,
            "task": self.task,
            "annotation": dict(self.annotation),
        }


def _validate_annotation(task: str, annotation: Mapping[str, Any]) -> None:
    """Check that the ground-truth payload carries what the task's reward needs."""
    if not isinstance(annotation, Mapping):
        raise ValueError("annotation must be an object")
    if task == "detection":
        return  # the label field is the ground truth
    if task == "grounding":
        TimeSpan.from_list(annotation.get("time"))
        boxes = boxes_map_from_json(annotation.get("boxes", None))
        if not boxes:
            raise ValueError("grounding annotation needs a non-empty boxes map")
    elif task == "tracking":
        boxes = boxes_map_from_json(annotation.get("boxes", None))
        if not boxes:
            raise ValueError("tracking annotation needs a non-empty boxes map")
    elif task == "counting":
        counts = annotation.get("counts")
        if (
            not isinstance(counts, (list, tuple))
            or len(counts) != 3
            or any(not isinstance(c, int) or isinstance(c, bool) or c < 0 for c in counts)
        ):
            raise ValueError("counting annotation needs counts: [circles, squares, triangles]")
    elif task == "artifact_grounding":
        t = annotation.get("time_s")
        if not isinstance(t, (int, float)) or isinstance(t, bool):
            raise ValueError("artifact_grounding annotation needs a numeric time_s")
        boxes = annotation.get("boxes")
        if not isinstance(boxes, list) or not boxes:
            raise ValueError("artifact_grounding annotation needs a non-empty boxes list")
        for b in boxes:
            BoundingBox.from_list(b)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    coord_mode: str = "pixels"
    fps_declared: float = 3.0

    def __post_init__(self) -> None:
        if self.coord_mode not in COORD_MODES:
            raise ManifestError(f"unknown coord_mode {self.coord_mode!r}")
        seen: set[str] = set()
        for entry in self.entries:
            if entry.id in seen:
                raise ManifestError(f"duplicate id {entry.id!r}")
            seen.add(entry.id)

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.id: e for e in self.entries}


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a line-delimited manifest; the first line may be a meta record
    (no "id" key) carrying coord_mode / fps_declared."""
    path = Path(path)
    entries: list[ManifestEntry] = []
    coord_mode = "pixels"
    fps_declared = 3.0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path.name}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise ManifestError(f"{path.name}:{lineno}: record must be an object")
            if "id" not in record:
                if lineno == 1 or not entries:
                    coord_mode = record.get("coord_mode", coord_mode)
                    fps_declared = float(record.get("fps_declared", fps_declared))
                    continue
                raise ManifestError(f"{path.name}:{lineno}: record missing id")
            try:
                entries.append(
                    ManifestEntry(
                        id=str(record["id"]),
                        media_path=str(record.get("media_path", "")),
                        label=record.get("label", ""),
                        subset_name=str(record.get("subset_name", "")),
                        group=record.get("group", ""),
                        task=record.get("task", ""),
                        annotation=record.get("annotation", {}),
                    )
                )
            except ManifestError as exc:
                raise ManifestError(f"{path.name}:{lineno}: {exc}") from None
    return DatasetManifest(entries=tuple(entries), coord_mode=coord_mode, fps_declared=fps_declared)


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write the canonical form: meta line first, then one entry per line,
    keys sorted. load → write round-trips byte-identically."""
    path = Path(path)
    lines = [
        json.dumps(
            {"coord_mode": manifest.coord_mode, "fps_declared": manifest.fps_declared},
            sort_keys=True,
        )
    ]
    lines.extend(json.dumps(e.to_record(), sort_keys=True) for e in manifest.entries)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ArtifactTaxonomy:
    """Named anomaly perspectives, each holding its detailed aspects."""

    perspectives: Mapping[str, tuple[str, ...]]


DEFAULT_TAXONOMY = ArtifactTaxonomy(
    perspectives={
        "Motion-level": (
            "Unnatural Kinematics and Trajectories",
            "Object Permanence Failure",
            "Structural Integrity Failure",
            "Interaction Anomalies",
            "Biological Motion Irregularity",
        ),
        "Physical-level": (
            "Inconsistent Lighting and Optics",
            "Causality and Property Violation",
            "Flawed Material Simulation",
            "Contextual and Semantic Mismatch",
        ),
        "Perceptual-level": (
            "Texture and Surface Instability",
            "Definition and Clarity Fluctuation",
        ),
    }
)


def validate_taxonomy(taxonomy: ArtifactTaxonomy) -> bool:
    """True iff exactly 3 perspectives and 11 uniquely named aspects in total."""
    if len(taxonomy.perspectives) != 3:
        return False
    aspects = [a for group in taxonomy.perspectives.values() for a in group]
    return len(aspects) == 11 and len(set(aspects)) == 11


def taxonomy_aspects(taxonomy: ArtifactTaxonomy) -> tuple[str, ...]:
    return tuple(a for group in taxonomy.perspectives.values() for a in group)


@dataclass(frozen=True)
class QAReportItem:
    """One question/answer pair of a per-video QA report, tagged with the
    artifact aspect it probes and the timestamps it cites."""

    question: str
    answer: str
    artifact_aspect: str
    timestamps: tuple[TimeSpan, ...] = ()
    taxonomy: ArtifactTaxonomy = DEFAULT_TAXONOMY

    def __post_init__(self) -> None:
        if self.artifact_aspect not in taxonomy_aspects(self.taxonomy):
            raise ValueError(f"unknown artifact aspect {self.artifact_aspect!r}")


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    """Read a line-delimited record file, reporting the failing line on error."""
    path = Path(path)
    records: list[dict[str, Any]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path.name}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise ManifestError(f"{path.name}:{lineno}: record must be an object")
            records.append(record)
    return records


def write_jsonl(records: list[dict[str, Any]], path: str | Path) -> None:
    path = Path(path)
    path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in records), encoding="utf-8"
    )
