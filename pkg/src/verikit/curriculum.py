"""Training schedules mixing perception and detection samples.

phase_level runs every perception batch before any detection batch within an
epoch (the default regime); batch_level pairs the two task families inside
each mini-batch (the ablated variant).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MODES = ("phase_level", "batch_level")


@dataclass(frozen=True)
class MixtureConfig:
    n_grounding: int = 3000
    n_counting: int = 2000
    n_detection: int = 10000
    epochs: int = 2
    batch_size: int = 32
    mode: str = "phase_level"
    # Run grounding and counting as separate sub-phases instead of one
    # shuffled perception pool.
    perception_subphases: bool = False

    def __post_init__(self) -> None:
        if min(self.n_grounding, self.n_counting, self.n_detection) < 0:
            raise ValueError("sample counts must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


def default_mixture() -> MixtureConfig:
    return MixtureConfig()


@dataclass(frozen=True)
class ScheduleBatch:
    epoch: int
    index: int
    phase: str  # "perception", "detection" or "mixed"
    items: tuple[tuple[str, str], ...]  # (sample id, task)


@dataclass(frozen=True)
class Schedule:
    batches: tuple[ScheduleBatch, ...]

    def sample_multiplicity(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for batch in self.batches:
            for sample_id, _ in batch.items:
                counts[sample_id] = counts.get(sample_id, 0) + 1
        return counts


def _sample_ids(cfg: MixtureConfig) -> dict[str, list[str]]:
    return {
        "grounding": [f"ground-{i:05d}" for i in range(cfg.n_grounding)],
        "counting": [f"count-{i:05d}" for i in range(cfg.n_counting)],
        "detection": [f"detect-{i:05d}" for i in range(cfg.n_detection)],
    }


def _shuffled(rng: np.random.Generator, items: list) -> list:
    order = rng.permutation(len(items))
    return [items[i] for i in order]


def _chunk(items: Sequence, size: int) -> Iterable[list]:
    for start in range(0, len(items), size):
        yield list(items[start : start + size])


def build_schedule(cfg: MixtureConfig, seed: int) -> Schedule:
    """Deterministic schedule; every sample appears exactly cfg.epochs times."""
    rng = np.random.default_rng(seed)
    ids = _sample_ids(cfg)
    perception = [(i, "grounding") for i in ids["grounding"]] + [
        (i, "counting") for i in ids["counting"]
    ]
    detection = [(i, "detection") for i in ids["detection"]]

    batches: list[ScheduleBatch] = []
    for epoch in range(cfg.epochs):
        index = 0
        if cfg.mode == "phase_level":
            if cfg.perception_subphases:
                pools = [
                    [(i, "grounding") for i in ids["grounding"]],
                    [(i, "counting") for i in ids["counting"]],
                ]
                perception_order = [x for pool in pools for x in _shuffled(rng, pool)]
            else:
                perception_order = _shuffled(rng, perception)
            for chunk in _chunk(perception_order, cfg.batch_size):
                batches.append(ScheduleBatch(epoch, index, "perception", tuple(chunk)))
                index += 1
            for chunk in _chunk(_shuffled(rng, detection), cfg.batch_size):
                batches.append(ScheduleBatch(epoch, index, "detection", tuple(chunk)))
                index += 1
        else:
            det = _shuffled(rng, detection)
            perc = _shuffled(rng, perception)
            det_take = math.ceil(cfg.batch_size / 2)
            perc_take = cfg.batch_size - det_take
            pos_d = pos_p = 0
            while pos_d < len(det) and pos_p < len(perc):
                batch = det[pos_d : pos_d + det_take] + perc[pos_p : pos_p + perc_take]
                pos_d += det_take
                pos_p += perc_take
                batches.append(ScheduleBatch(epoch, index, "mixed", tuple(batch)))
                index += 1
            leftovers = det[pos_d:] + perc[pos_p:]
            for chunk in _chunk(leftovers, cfg.batch_size):
                batches.append(ScheduleBatch(epoch, index, "mixed", tuple(chunk)))
                index += 1
    return Schedule(batches=tuple(batches))


def write_schedule(schedule: Schedule, path: str | Path) -> None:
    """Line-delimited export: {epoch, batch_index, phase, ids}."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for batch in schedule.batches:
            fh.write(
                json.dumps(
                    {
                        "epoch": batch.epoch,
                        "batch_index": batch.index,
                        "phase": batch.phase,
                        "ids": [list(item) for item in batch.items],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
