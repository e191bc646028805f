"""Line-delimited JSON request/response bridge for host-language bindings.

One request object per stdin line, one response object per stdout line:

    {"id": 7, "op": "score", "params": {...}}
    {"id": 7, "ok": true, "result": {...}}

The loop holds a frozen LossConfig for its lifetime, so every call through
one bridge process sees the same configuration. Errors come back as
{"ok": false, "error": {"code", "message"}} and never kill the loop.
"""

from __future__ import annotations

import json
import sys
from typing import Any, Callable, Mapping, TextIO

import numpy as np

from ._version import __version__
from .core import LossConfig, ManifestEntry
from .curriculum import MixtureConfig, build_schedule
from .losses import (
    PreferenceItem,
    RolloutGroup,
    SequenceLogProbs,
    gspo_loss,
    joint_dpo_loss,
)
from .parsers import parse_response, response_to_record
from .rewards import score_response

PROTOCOL_VERSION = 1


def _op_ping(params: Mapping[str, Any], cfg: LossConfig) -> dict[str, Any]:
    return {"version": __version__, "protocol": PROTOCOL_VERSION, "config": cfg.__dict__.copy()}


def _op_parse(params: Mapping[str, Any], cfg: LossConfig) -> dict[str, Any]:
    return response_to_record(parse_response(str(params["task"]), str(params["text"])))


def _op_score(params: Mapping[str, Any], cfg: LossConfig) -> dict[str, Any]:
    entry = ManifestEntry(
        id=str(params.get("id", "rpc")),
        media_path="",
        label=str(params.get("gt_label", "real")),
        subset_name="",
        group="ID",
        task=str(params["task"]),
        annotation=params.get("annotation", {}),
    )
    record = score_response(entry, str(params["raw_text"]), cfg)
    return record.to_record()


def _items_from_params(raw_items: Any) -> list[PreferenceItem]:
    return [
        PreferenceItem(
            kind=str(item["kind"]),
            logp_theta_p=float(item["logp_theta_p"]),
            logp_ref_p=float(item["logp_ref_p"]),
            logp_theta_r=float(item["logp_theta_r"]),
            logp_ref_r=float(item["logp_ref_r"]),
        )
        for item in raw_items
    ]


def _op_joint_dpo_loss(params: Mapping[str, Any], cfg: LossConfig) -> dict[str, Any]:
    response_items = _items_from_params(params.get("response_items", []))
    video_items = _items_from_params(params.get("video_items", []))
    loss, (grads_response, grads_video) = joint_dpo_loss(
        response_items, video_items, cfg.beta, pooling=str(params.get("pooling", "pooled"))
    )
    return {
        "loss": loss,
        "grads_response": grads_response.tolist(),
        "grads_video": grads_video.tolist(),
    }


def _op_gspo_loss(params: Mapping[str, Any], cfg: LossConfig) -> dict[str, Any]:
    groups = []
    for raw in params.get("groups", []):
        sequences = tuple(
            SequenceLogProbs(
                logp_theta=np.asarray(theta, dtype=np.float64),
                logp_old=np.asarray(old, dtype=np.float64),
            )
            for theta, old in zip(raw["logp_theta"], raw["logp_old"])
        )
        groups.append(
            RolloutGroup(sequences=sequences, rewards=np.asarray(raw["rewards"], dtype=np.float64))
        )
    loss, grads = gspo_loss(groups, cfg)
    return {
        "loss": loss,
        "grads": [[g.tolist() for g in group] for group in grads],
    }


def _op_schedule(params: Mapping[str, Any], cfg: LossConfig) -> dict[str, Any]:
    mixture = MixtureConfig(
        n_grounding=int(params.get("n_grounding", 3000)),
        n_counting=int(params.get("n_counting", 2000)),
        n_detection=int(params.get("n_detection", 10000)),
        epochs=int(params.get("epochs", 2)),
        batch_size=int(params.get("batch_size", 32)),
        mode=str(params.get("mode", "phase_level")),
        perception_subphases=bool(params.get("perception_subphases", False)),
    )
    schedule = build_schedule(mixture, int(params.get("seed", 0)))
    return {
        "batches": [
            {
                "epoch": b.epoch,
                "batch_index": b.index,
                "phase": b.phase,
                "ids": [list(item) for item in b.items],
            }
            for b in schedule.batches
        ]
    }


_OPS: dict[str, Callable[[Mapping[str, Any], LossConfig], dict[str, Any]]] = {
    "ping": _op_ping,
    "parse": _op_parse,
    "score": _op_score,
    "joint_dpo_loss": _op_joint_dpo_loss,
    "gspo_loss": _op_gspo_loss,
    "schedule": _op_schedule,
}


def handle_request(request: Mapping[str, Any], cfg: LossConfig) -> dict[str, Any]:
    request_id = request.get("id")
    op = request.get("op")
    handler = _OPS.get(str(op))
    if handler is None:
        return {
            "id": request_id,
            "ok": False,
            "error": {"code": "unknown_op", "message": f"unknown op {op!r}"},
        }
    try:
        result = handler(request.get("params", {}), cfg)
    except (KeyError, TypeError, ValueError) as exc:
        return {
            "id": request_id,
            "ok": False,
            "error": {"code": "bad_request", "message": str(exc)},
        }
    return {"id": request_id, "ok": True, "result": result}


def serve(cfg: LossConfig, stdin: TextIO | None = None, stdout: TextIO | None = None) -> int:
    """Serve requests until stdin closes. Returns the number handled."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    handled = 0
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            response = {
                "id": None,
                "ok": False,
                "error": {"code": "bad_json", "message": exc.msg},
            }
        else:
            response = handle_request(request, cfg)
        stdout.write(json.dumps(response, sort_keys=True) + "\n")
        stdout.flush()
        handled += 1
    return handled
