"""Interval and box overlap arithmetic underlying the perception rewards.

Boxes are closed real rectangles: touching edges intersect with zero area.
All functions are pure and return values in [0, 1].
"""

from __future__ import annotations

from typing import Mapping

from .core import BoundingBox, TimeSpan

# Map from integer second to the box predicted/annotated at that second.
SecondIndexedBoxes = Mapping[int, BoundingBox]


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when the union has zero area."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(0.0, iw) * max(0.0, ih)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def span_iou(a: TimeSpan, b: TimeSpan) -> float:
    """Intersection over union of two time intervals; 0 when the union is empty."""
    inter = max(0.0, min(a.end_s, b.end_s) - max(a.start_s, b.start_s))
    union = a.length + b.length - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def mean_box_iou(pred: SecondIndexedBoxes, gt: SecondIndexedBoxes) -> float:
    """Per-second IoU averaged over the ground-truth seconds.

    A ground-truth second missing from pred contributes 0; predicted seconds
    absent from gt are ignored.
    """
    if not gt:
        raise ValueError("no reference frames")
    total = 0.0
    for second in sorted(gt):
        if second in pred:
            total += box_iou(pred[second], gt[second])
    return total / len(gt)
