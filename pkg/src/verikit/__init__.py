"""Verifiable-reward toolkit for video perception RL.

Rewards (IoU tracking/grounding, shape counting, detection with a format
bonus), preference and clipped-surrogate losses over externally supplied
log-probabilities, a deterministic shape-counting video synthesizer,
training schedules, and benchmark metric aggregation.
"""

from ._version import __version__
from .core import (
    BoundingBox,
    DatasetManifest,
    DEFAULT_TAXONOMY,
    LossConfig,
    ManifestEntry,
    TimeSpan,
    load_manifest,
    validate_taxonomy,
    write_manifest,
)
from .geometry import box_iou, mean_box_iou, span_iou
from .losses import (
    PreferenceItem,
    RolloutGroup,
    SequenceLogProbs,
    dpo_loss,
    dpo_margin,
    finite_difference_check,
    group_advantages,
    gspo_loss,
    gspo_ratio,
    joint_dpo_loss,
)
from .parsers import (
    parse_counting,
    parse_detection,
    parse_grounding,
    parse_judgment,
    parse_response,
    parse_tracking,
)
from .rewards import (
    RewardRecord,
    count_reward,
    count_reward_shape,
    detection_reward,
    ground_reward,
    score_file,
    track_reward,
)

__all__ = [
    "__version__",
    "BoundingBox",
    "TimeSpan",
    "LossConfig",
    "ManifestEntry",
    "DatasetManifest",
    "DEFAULT_TAXONOMY",
    "load_manifest",
    "write_manifest",
    "validate_taxonomy",
    "box_iou",
    "span_iou",
    "mean_box_iou",
    "parse_detection",
    "parse_grounding",
    "parse_tracking",
    "parse_counting",
    "parse_judgment",
    "parse_response",
    "RewardRecord",
    "track_reward",
    "ground_reward",
    "count_reward",
    "count_reward_shape",
    "detection_reward",
    "score_file",
    "SequenceLogProbs",
    "PreferenceItem",
    "RolloutGroup",
    "dpo_margin",
    "dpo_loss",
    "joint_dpo_loss",
    "gspo_ratio",
    "group_advantages",
    "gspo_loss",
    "finite_difference_check",
]
