"""Preference and clipped-surrogate objectives over externally supplied
log-probabilities, with analytic gradients and a finite-difference checker.

No policies live here: callers hand in per-token log-probabilities (or their
sums) under the trainable policy, the rollout policy, and the frozen
reference, and get back loss values plus gradients with respect to the
trainable-policy inputs. Rewards and advantages are treated as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .core import LossConfig, read_jsonl

PREFERENCE_KINDS = ("perception", "reasoning")


@dataclass(frozen=True, eq=False)
class SequenceLogProbs:
    """Per-token log-probabilities for one sampled sequence.

    logp_old is required by the clipped-surrogate path, logp_ref by
    preference losses built from sequence evaluations. Tracks present must
    share the token axis.
    """

    logp_theta: np.ndarray
    logp_old: np.ndarray | None = None
    logp_ref: np.ndarray | None = None

    def __post_init__(self) -> None:
        theta = np.asarray(self.logp_theta, dtype=np.float64)
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("logp_theta must be a non-empty 1-D array")
        object.__setattr__(self, "logp_theta", theta)
        for name in ("logp_old", "logp_ref"):
            track = getattr(self, name)
            if track is None:
                continue
            arr = np.asarray(track, dtype=np.float64)
            if arr.shape != theta.shape:
                raise ValueError(f"{name} length {arr.shape} != logp_theta {theta.shape}")
            object.__setattr__(self, name, arr)
        for name in ("logp_theta", "logp_old", "logp_ref"):
            arr = getattr(self, name)
            if arr is not None and (not np.all(np.isfinite(arr)) or np.any(arr > 0)):
                raise ValueError(f"{name} entries must be finite log-probabilities (<= 0)")

    @property
    def token_count(self) -> int:
        return int(self.logp_theta.size)


@dataclass(frozen=True)
class PreferenceItem:
    """One preference pair as four log-probability sums.

    The "p leg" is the perception-flavored alternative (curated response, or
    the response conditioned on the perception video); the "r leg" is the
    reasoning-flavored one (base-model response, or conditioning on the
    reasoning video). kind == "perception" prefers the p leg, "reasoning"
    prefers the r leg.
    """

    kind: str
    logp_theta_p: float
    logp_ref_p: float
    logp_theta_r: float
    logp_ref_r: float

    def __post_init__(self) -> None:
        if self.kind not in PREFERENCE_KINDS:
            raise ValueError(f"kind must be one of {PREFERENCE_KINDS}, got {self.kind!r}")
        for name in ("logp_theta_p", "logp_ref_p", "logp_theta_r", "logp_ref_r"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True, eq=False)
class RolloutGroup:
    """G sampled sequences for one query, with their scalar rewards."""

    sequences: tuple[SequenceLogProbs, ...]
    rewards: np.ndarray

    def __post_init__(self) -> None:
        rewards = np.asarray(self.rewards, dtype=np.float64)
        object.__setattr__(self, "rewards", rewards)
        if rewards.ndim != 1 or rewards.size != len(self.sequences):
            raise ValueError("rewards must align one-to-one with sequences")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        for seq in self.sequences:
            if seq.logp_old is None:
                raise ValueError("rollout sequences need the old-policy track")


def _preference_sign(kind: str) -> float:
    return 1.0 if kind == "perception" else -1.0


def dpo_margin(item: PreferenceItem, beta: float) -> float:
    """beta-scaled winner-minus-loser log-ratio difference; the winner is
    resolved by item.kind."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    diff = (item.logp_theta_p - item.logp_ref_p) - (item.logp_theta_r - item.logp_ref_r)
    return beta * _preference_sign(item.kind) * diff


def _item_weights(items: Sequence[PreferenceItem], pooling: str) -> np.ndarray:
    if pooling == "pooled":
        return np.full(len(items), 1.0 / len(items))
    if pooling == "by_kind":
        # Sum of per-kind means, mirroring the two displayed expectation terms.
        weights = np.empty(len(items))
        for kind in PREFERENCE_KINDS:
            idx = [i for i, it in enumerate(items) if it.kind == kind]
            for i in idx:
                weights[i] = 1.0 / len(idx)
        return weights
    raise ValueError(f"unknown pooling {pooling!r}")


def dpo_loss(
    items: Sequence[PreferenceItem], beta: float, pooling: str = "pooled"
) -> tuple[float, np.ndarray]:
    """Mean negative log-sigmoid of the margins.

    Returns (loss, grads) where grads[i] = (d loss / d logp_theta_p_i,
    d loss / d logp_theta_r_i). Reference-policy inputs are constants.
    """
    if not items:
        raise ValueError("empty preference batch")
    margins = np.array([dpo_margin(it, beta) for it in items])
    signs = np.array([_preference_sign(it.kind) for it in items])
    weights = _item_weights(items, pooling)
    loss = float(np.dot(weights, np.logaddexp(0.0, -margins)))
    # d(-log sigmoid(u))/du = sigmoid(u) - 1
    dloss_du = weights * (expit(margins) - 1.0)
    grad_p = dloss_du * beta * signs
    return loss, np.stack([grad_p, -grad_p], axis=1)


def joint_dpo_loss(
    response_items: Sequence[PreferenceItem],
    video_items: Sequence[PreferenceItem],
    beta: float,
    pooling: str = "pooled",
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Sum of the response-level and video-level losses; an empty sub-batch
    contributes zero."""
    if not response_items and not video_items:
        raise ValueError("both preference batches are empty")
    loss = 0.0
    grads: list[np.ndarray] = []
    for batch in (response_items, video_items):
        if batch:
            part, grad = dpo_loss(batch, beta, pooling)
            loss += part
            grads.append(grad)
        else:
            grads.append(np.zeros((0, 2)))
    return loss, (grads[0], grads[1])


def gspo_ratio(seq: SequenceLogProbs) -> float:
    """Sequence-likelihood ratio, length-normalized in log space:
    exp((sum logp_theta - sum logp_old) / token_count)."""
    if seq.logp_old is None:
        raise ValueError("old-policy track required for the importance ratio")
    return float(np.exp((seq.logp_theta.sum() - seq.logp_old.sum()) / seq.token_count))


def group_advantages(rewards: Sequence[float] | np.ndarray, std_floor: float = 1e-8) -> np.ndarray:
    """(R - mean) / max(population std, std_floor); an all-equal group gets
    exactly zero advantages."""
    if std_floor <= 0:
        raise ValueError("std_floor must be > 0")
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise ValueError("need at least two rewards per group")
    return (r - r.mean()) / max(float(r.std()), std_floor)


def _ratio_from_arrays(theta: np.ndarray, old: np.ndarray) -> float:
    return float(np.exp((theta.sum() - old.sum()) / theta.size))


def _gspo_arrays(
    groups: Sequence[tuple[list[np.ndarray], list[np.ndarray], np.ndarray]],
    cfg: LossConfig,
    want_grads: bool = True,
) -> tuple[float, list[list[np.ndarray]]]:
    n_groups = len(groups)
    lo = 1.0 - cfg.eps_clip_low
    hi = 1.0 + cfg.eps_clip_high
    total = 0.0
    grads: list[list[np.ndarray]] = []
    for theta_list, old_list, rewards in groups:
        advantages = group_advantages(rewards, cfg.advantage_std_floor)
        group_grads: list[np.ndarray] = []
        group_term = 0.0
        for theta, old, adv in zip(theta_list, old_list, advantages):
            n_tok = theta.size
            ratio = _ratio_from_arrays(theta, old)
            clipped_ratio = min(max(ratio, lo), hi)
            unclipped = ratio * adv
            clipped = clipped_ratio * adv
            norm = (1.0 / n_tok) if cfg.token_normalize else 1.0
            group_term += norm * n_tok * min(unclipped, clipped)
            if want_grads:
                if unclipped <= clipped:
                    dmin_dratio = adv
                else:
                    # clipped branch strictly selected: flat outside the bounds
                    dmin_dratio = adv if lo < ratio < hi else 0.0
                per_token = (
                    -(1.0 / (n_groups * cfg.group_size))
                    * norm
                    * n_tok
                    * dmin_dratio
                    * (ratio / n_tok)
                )
                group_grads.append(np.full(n_tok, per_token))
        total -= group_term / cfg.group_size
        grads.append(group_grads)
    return total / n_groups, grads


def _group_arrays(
    groups: Sequence[RolloutGroup], cfg: LossConfig
) -> list[tuple[list[np.ndarray], list[np.ndarray], np.ndarray]]:
    out = []
    for group in groups:
        if len(group.sequences) != cfg.group_size:
            raise ValueError(
                f"group has {len(group.sequences)} sequences, expected {cfg.group_size}"
            )
        out.append(
            (
                [seq.logp_theta for seq in group.sequences],
                [seq.logp_old for seq in group.sequences],
                group.rewards,
            )
        )
    return out


def gspo_loss(
    groups: Sequence[RolloutGroup], cfg: LossConfig
) -> tuple[float, list[list[np.ndarray]]]:
    """Clipped sequence-level surrogate, averaged over groups.

    Per sequence the contribution is norm * sum_t min(r*A, clip(r)*A) with
    A constant across tokens and norm = 1/|o| when cfg.token_normalize (the
    batch-level variant drops that outer normalization but keeps the 1/|o|
    exponent inside the ratio). Gradients flow through the selected branch;
    a strictly-clipped sequence gets exactly zero gradient.
    """
    if not groups:
        raise ValueError("empty rollout batch")
    return _gspo_arrays(_group_arrays(groups, cfg), cfg)


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    failing: tuple[int, ...]
    checked: int
    skipped: int
    tol: float

    @property
    def passed(self) -> bool:
        return not self.failing

    def __str__(self) -> str:
        status = "pass" if self.passed else f"FAIL at {list(self.failing[:8])}"
        return (
            f"gradcheck {status}: max_rel_error={self.max_rel_error:.3e} "
            f"(tol {self.tol:.0e}, {self.checked} checked, {self.skipped} skipped)"
        )


def finite_difference_check(
    loss_fn: Callable[[np.ndarray], float],
    x0: np.ndarray,
    grad: np.ndarray,
    h: float = 1e-5,
    tol: float = 1e-6,
    skip: np.ndarray | None = None,
    atol: float = 1e-10,
) -> GradCheckReport:
    """Central differences per coordinate against the analytic gradient.

    Coordinates flagged in `skip` (kinks) are excluded. Differences below
    atol count as exact agreement, which keeps flat directions from dividing
    zero by zero.
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != x0.shape:
        raise ValueError("gradient shape must match input shape")
    skip_mask = (
        np.zeros(x0.size, dtype=bool) if skip is None else np.asarray(skip, dtype=bool).ravel()
    )
    max_rel = 0.0
    failing: list[int] = []
    checked = 0
    flat = x0.ravel()
    grad_flat = grad.ravel()
    for j in range(flat.size):
        if skip_mask[j]:
            continue
        checked += 1
        step = np.zeros_like(flat)
        step[j] = h
        fd = (loss_fn((flat + step).reshape(x0.shape)) - loss_fn((flat - step).reshape(x0.shape))) / (
            2.0 * h
        )
        diff = abs(fd - grad_flat[j])
        rel = 0.0 if diff <= atol else diff / max(abs(fd), abs(grad_flat[j]))
        max_rel = max(max_rel, rel)
        if rel >= tol:
            failing.append(j)
    return GradCheckReport(
        max_rel_error=max_rel,
        failing=tuple(failing),
        checked=checked,
        skipped=int(skip_mask.sum()),
        tol=tol,
    )


# ---------------------------------------------------------------------------
# Flattened views used by the gradient checker, the CLI and the bindings.


def dpo_theta_vector(items: Sequence[PreferenceItem]) -> np.ndarray:
    return np.array([v for it in items for v in (it.logp_theta_p, it.logp_theta_r)])


def dpo_items_with_theta(
    items: Sequence[PreferenceItem], theta: np.ndarray
) -> list[PreferenceItem]:
    pairs = np.asarray(theta, dtype=np.float64).reshape(len(items), 2)
    return [
        replace(it, logp_theta_p=float(p), logp_theta_r=float(r))
        for it, (p, r) in zip(items, pairs)
    ]


def joint_dpo_theta_vector(
    response_items: Sequence[PreferenceItem], video_items: Sequence[PreferenceItem]
) -> np.ndarray:
    return np.concatenate([dpo_theta_vector(response_items), dpo_theta_vector(video_items)])


def joint_dpo_loss_at(
    theta: np.ndarray,
    response_items: Sequence[PreferenceItem],
    video_items: Sequence[PreferenceItem],
    beta: float,
    pooling: str = "pooled",
) -> float:
    split = 2 * len(response_items)
    resp = dpo_items_with_theta(response_items, theta[:split]) if response_items else []
    vid = dpo_items_with_theta(video_items, theta[split:]) if video_items else []
    return joint_dpo_loss(resp, vid, beta, pooling)[0]


def gspo_theta_vector(groups: Sequence[RolloutGroup]) -> np.ndarray:
    return np.concatenate(
        [seq.logp_theta for group in groups for seq in group.sequences]
    )


def gspo_grad_vector(grads: list[list[np.ndarray]]) -> np.ndarray:
    return np.concatenate([g for group in grads for g in group])


def gspo_loss_at(theta: np.ndarray, groups: Sequence[RolloutGroup], cfg: LossConfig) -> float:
    """Loss with the flattened theta vector substituted in (validation-free
    path, so finite differences may nudge entries across zero)."""
    arrays = _group_arrays(groups, cfg)
    theta = np.asarray(theta, dtype=np.float64)
    rebuilt = []
    offset = 0
    for theta_list, old_list, rewards in arrays:
        new_thetas = []
        for arr in theta_list:
            new_thetas.append(theta[offset : offset + arr.size])
            offset += arr.size
        rebuilt.append((new_thetas, old_list, rewards))
    return _gspo_arrays(rebuilt, cfg, want_grads=False)[0]


def gspo_kink_mask(
    groups: Sequence[RolloutGroup], cfg: LossConfig, h: float = 1e-5, margin: float = 1e-6
) -> np.ndarray:
    """Token coordinates whose sequence ratio sits close enough to a clip
    bound that a +/-h probe would straddle the kink."""
    lo = 1.0 - cfg.eps_clip_low
    hi = 1.0 + cfg.eps_clip_high
    chunks = []
    for group in groups:
        for seq in group.sequences:
            ratio = gspo_ratio(seq)
            # A +/-h nudge on one token moves the ratio by ~ratio*h/n.
            guard = max(margin, 2.0 * ratio * h / seq.token_count)
            near = min(abs(ratio - lo), abs(ratio - hi)) < guard
            chunks.append(np.full(seq.token_count, near))
    return np.concatenate(chunks)


# ---------------------------------------------------------------------------
# Randomized instance generators (tests, gradcheck CLI).


def random_preference_batch(
    rng: np.random.Generator, n_items: int, spread: float = 3.0
) -> list[PreferenceItem]:
    items = []
    for _ in range(n_items):
        kind = PREFERENCE_KINDS[int(rng.integers(0, 2))]
        ref_p = float(rng.uniform(-40.0, -5.0))
        ref_r = float(rng.uniform(-40.0, -5.0))
        items.append(
            PreferenceItem(
                kind=kind,
                logp_theta_p=ref_p + float(rng.uniform(-spread, spread)),
                logp_ref_p=ref_p,
                logp_theta_r=ref_r + float(rng.uniform(-spread, spread)),
                logp_ref_r=ref_r,
            )
        )
    return items


def random_rollout_groups(
    rng: np.random.Generator,
    cfg: LossConfig,
    n_groups: int,
    token_range: tuple[int, int] = (3, 12),
    ratio_noise: float = 2e-3,
) -> list[RolloutGroup]:
    """Groups whose ratios land both inside and outside the tight clip bounds."""
    groups = []
    for _ in range(n_groups):
        sequences = []
        for _ in range(cfg.group_size):
            n_tok = int(rng.integers(token_range[0], token_range[1] + 1))
            old = rng.uniform(-3.0, -0.1, size=n_tok)
            theta = np.minimum(old + rng.normal(0.0, ratio_noise, size=n_tok), 0.0)
            sequences.append(SequenceLogProbs(logp_theta=theta, logp_old=old))
        rewards = rng.uniform(0.0, 1.0, size=cfg.group_size)
        groups.append(RolloutGroup(sequences=tuple(sequences), rewards=rewards))
    return groups


# ---------------------------------------------------------------------------
# Record-file loaders (External Interfaces).


def load_rollout_file(path: str | Path, cfg: LossConfig) -> list[RolloutGroup]:
    """Rollout records {id, group_id, logp_theta, logp_old, reward}, grouped
    by group_id (groups ordered by group_id, sequences by id)."""
    records = read_jsonl(path)
    by_group: dict[str, list[Mapping[str, Any]]] = {}
    for record in records:
        by_group.setdefault(str(record.get("group_id", "")), []).append(record)
    groups = []
    for group_id in sorted(by_group):
        members = sorted(by_group[group_id], key=lambda r: str(r.get("id", "")))
        sequences = tuple(
            SequenceLogProbs(
                logp_theta=np.asarray(m["logp_theta"], dtype=np.float64),
                logp_old=np.asarray(m["logp_old"], dtype=np.float64),
            )
            for m in members
        )
        rewards = np.array([float(m["reward"]) for m in members])
        if len(sequences) != cfg.group_size:
            raise ValueError(
                f"group {group_id!r} has {len(sequences)} sequences, expected {cfg.group_size}"
            )
        groups.append(RolloutGroup(sequences=sequences, rewards=rewards))
    return groups


def load_preference_file(
    path: str | Path,
) -> tuple[list[PreferenceItem], list[PreferenceItem]]:
    """Preference records {id, level, kind, logp_theta_p, logp_ref_p,
    logp_theta_r, logp_ref_r}; returns (response items, video items)."""
    response_items: list[PreferenceItem] = []
    video_items: list[PreferenceItem] = []
    for record in read_jsonl(path):
        item = PreferenceItem(
            kind=str(record["kind"]),
            logp_theta_p=float(record["logp_theta_p"]),
            logp_ref_p=float(record["logp_ref_p"]),
            logp_theta_r=float(record["logp_theta_r"]),
            logp_ref_r=float(record["logp_ref_r"]),
        )
        level = str(record.get("level", "response"))
        if level == "response":
            response_items.append(item)
        elif level == "video":
            video_items.append(item)
        else:
            raise ValueError(f"unknown preference level {level!r}")
    return response_items, video_items
