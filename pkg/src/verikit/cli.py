"""Command-line entry point: synth, verify, score, loss, gradcheck, schedule,
eval, judge, prompt, rpc.

Each subcommand is a thin shell over one library call, exits 0 on success
(2 on usage errors, 1 on runtime errors), and prints one machine-readable
`RESULT {...}` summary line as its last stdout line.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import rpc
from ._version import __version__
from .core import LossConfig, load_manifest, read_jsonl, write_jsonl
from .curriculum import MODES, MixtureConfig, build_schedule, write_schedule
from .evaluation import (
    JudgeClient,
    PairwiseJudgment,
    binary_metrics,
    format_metric_table,
    hierarchical_average,
    judge_pair,
    round_half_up,
    win_rate_report,
)
from .losses import (
    finite_difference_check,
    gspo_grad_vector,
    gspo_kink_mask,
    gspo_loss,
    gspo_loss_at,
    gspo_theta_vector,
    joint_dpo_loss,
    joint_dpo_loss_at,
    joint_dpo_theta_vector,
    load_preference_file,
    load_rollout_file,
    random_preference_batch,
    random_rollout_groups,
)
from .parsers import DetectionVerdict, parse_detection
from .prompts import JUDGE_DIMENSIONS, SYSTEM_PROMPTS, TASK_PROMPTS
from .rewards import score_file
from .synth import (
    DIFFICULTY_LEVELS,
    SolidBackground,
    SynthConfig,
    episode_seed,
    sample_plan,
    synthesize,
    verify_dataset,
)

DEFAULT_SEED = 1234


def _emit(payload: dict) -> None:
    print("RESULT " + json.dumps(payload, sort_keys=True))


def _loss_config(args: argparse.Namespace) -> LossConfig:
    if getattr(args, "config", None):
        return LossConfig.from_dict(json.loads(args.config))
    return LossConfig()


def _synthesize_episode(task: tuple) -> str:
    config, base_seed, index, out_root = task
    seed = episode_seed(base_seed, index)
    plan = sample_plan(config, seed)
    out = Path(out_root) / f"episode_{index:05d}"
    synthesize(plan, SolidBackground(config.background_rgb), out)
    return str(out)


def _cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        difficulty=args.difficulty,
        shapes_per_video_range=(args.shapes_min, args.shapes_max),
        frame_size=(args.width, args.height),
        duration_s=args.duration,
        fps=args.fps,
        non_overlapping=args.non_overlapping,
        background_rgb=tuple(int(c) for c in args.background.split(",")),
    )
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    tasks = [(config, args.seed, i, str(out_root)) for i in range(args.n)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            episodes = list(pool.map(_synthesize_episode, tasks))
    else:
        episodes = [_synthesize_episode(t) for t in tasks]
    _emit(
        {
            "cmd": "synth",
            "episodes": len(episodes),
            "difficulty": args.difficulty,
            "seed": args.seed,
            "out": str(out_root),
        }
    )
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    root = Path(args.dataset)
    targets = sorted(p for p in root.glob("episode_*") if p.is_dir()) or [root]
    failures = []
    for target in targets:
        report = verify_dataset(target)
        if not report.ok:
            failures.append({"episode": target.name, "issues": list(report.issues)})
            print(f"{target.name}: {report}")
    _emit(
        {
            "cmd": "verify",
            "checked": len(targets),
            "ok": not failures,
            "failures": failures,
        }
    )
    return 0 if not failures else 1


def _cmd_score(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _loss_config(args)
    records = score_file(args.responses, manifest, cfg)
    rows = [r.to_record() for r in records]
    if args.out:
        write_jsonl(rows, args.out)
    mean_reward = sum(r.reward for r in records) / len(records) if records else 0.0
    _emit(
        {
            "cmd": "score",
            "n": len(records),
            "mean_reward": mean_reward,
            "parse_failures": sum(1 for r in records if not r.parse_ok),
            "out": args.out or "",
        }
    )
    return 0


def _cmd_loss(args: argparse.Namespace) -> int:
    cfg = _loss_config(args)
    if args.kind == "gspo":
        if not args.rollouts:
            raise ValueError("--rollouts is required for --kind gspo")
        groups = load_rollout_file(args.rollouts, cfg)
        loss, grads = gspo_loss(groups, cfg)
        payload = {
            "cmd": "loss",
            "kind": "gspo",
            "loss": loss,
            "n_groups": len(groups),
            "token_normalize": cfg.token_normalize,
        }
        if args.grads_out:
            Path(args.grads_out).write_text(
                json.dumps(
                    {"loss": loss, "grads": [[g.tolist() for g in group] for group in grads]},
                    sort_keys=True,
                )
                + "\n",
                encoding="utf-8",
            )
            payload["grads_out"] = args.grads_out
    else:
        if not args.preferences:
            raise ValueError("--preferences is required for --kind joint_dpo")
        response_items, video_items = load_preference_file(args.preferences)
        loss, (grads_response, grads_video) = joint_dpo_loss(
            response_items, video_items, cfg.beta, pooling=args.pooling
        )
        payload = {
            "cmd": "loss",
            "kind": "joint_dpo",
            "loss": loss,
            "n_response": len(response_items),
            "n_video": len(video_items),
        }
        if args.grads_out:
            Path(args.grads_out).write_text(
                json.dumps(
                    {
                        "loss": loss,
                        "grads_response": grads_response.tolist(),
                        "grads_video": grads_video.tolist(),
                    },
                    sort_keys=True,
                )
                + "\n",
                encoding="utf-8",
            )
            payload["grads_out"] = args.grads_out
    _emit(payload)
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    cfg = _loss_config(args)
    rng = np.random.default_rng(args.seed)
    tol = args.tol if args.tol is not None else (1e-5 if args.loss == "gspo" else 1e-6)
    worst = 0.0
    failures = 0
    for trial in range(args.trials):
        if args.loss == "gspo":
            groups = random_rollout_groups(rng, cfg, n_groups=2)
            x0 = gspo_theta_vector(groups)
            grad = gspo_grad_vector(gspo_loss(groups, cfg)[1])
            report = finite_difference_check(
                lambda x: gspo_loss_at(x, groups, cfg),
                x0,
                grad,
                h=args.h,
                tol=tol,
                skip=gspo_kink_mask(groups, cfg, h=args.h),
            )
        else:
            response_items = random_preference_batch(rng, int(rng.integers(2, 9)))
            video_items = random_preference_batch(rng, int(rng.integers(2, 9)))
            x0 = joint_dpo_theta_vector(response_items, video_items)
            _, (g_resp, g_vid) = joint_dpo_loss(response_items, video_items, cfg.beta)
            grad = np.concatenate([g_resp.ravel(), g_vid.ravel()])
            report = finite_difference_check(
                lambda x: joint_dpo_loss_at(x, response_items, video_items, cfg.beta),
                x0,
                grad,
                h=args.h,
                tol=tol,
            )
        worst = max(worst, report.max_rel_error)
        if not report.passed:
            failures += 1
            print(f"trial {trial}: {report}")
    _emit(
        {
            "cmd": "gradcheck",
            "loss": args.loss,
            "trials": args.trials,
            "failures": failures,
            "max_rel_error": worst,
            "tol": tol,
            "passed": failures == 0,
        }
    )
    return 0 if failures == 0 else 1


def _cmd_schedule(args: argparse.Namespace) -> int:
    cfg = MixtureConfig(
        n_grounding=args.grounding,
        n_counting=args.counting,
        n_detection=args.detection,
        epochs=args.epochs,
        batch_size=args.batch_size,
        mode=args.mode,
        perception_subphases=args.perception_subphases,
    )
    schedule = build_schedule(cfg, args.seed)
    if args.out:
        write_schedule(schedule, args.out)
    _emit(
        {
            "cmd": "schedule",
            "batches": len(schedule.batches),
            "samples": sum(len(b.items) for b in schedule.batches),
            "mode": cfg.mode,
            "epochs": cfg.epochs,
            "out": args.out or "",
        }
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    preds = []
    for record in read_jsonl(args.preds):
        verdict = record.get("verdict")
        if verdict is None and "raw_text" in record:
            parsed = parse_detection(str(record["raw_text"]))
            verdict = parsed.verdict if isinstance(parsed, DetectionVerdict) else None
        preds.append({"id": record.get("id", ""), "verdict": verdict})
    rows = binary_metrics(preds, manifest)
    print(format_metric_table(rows, args.metric))
    avg = hierarchical_average(rows, args.metric)
    if args.report:
        Path(args.report).write_text(
            json.dumps(
                {
                    "rows": [r.to_record() for r in rows],
                    "metric": args.metric,
                    "hierarchical_average": avg,
                    "hierarchical_average_x100_1dp": round_half_up(100.0 * avg),
                },
                sort_keys=True,
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    _emit(
        {
            "cmd": "eval",
            "metric": args.metric,
            "avg": avg,
            "avg_x100_1dp": round_half_up(100.0 * avg),
            "subsets": len(rows),
        }
    )
    return 0


def _cmd_judge(args: argparse.Namespace) -> int:
    client = JudgeClient(
        endpoint=args.endpoint or None, mock=args.mock, judge_id=args.judge_id
    )
    dimensions = [args.dimension] if args.dimension else list(JUDGE_DIMENSIONS)
    judgments: list[PairwiseJudgment] = []
    unparsed = 0
    for record in read_jsonl(args.pairs):
        for dimension in dimensions:
            result = judge_pair(
                client,
                str(record.get("id", "")),
                dimension,
                str(record.get("output_a", "")),
                str(record.get("output_b", "")),
            )
            if isinstance(result, PairwiseJudgment):
                judgments.append(result)
            else:
                unparsed += 1
    report = win_rate_report(judgments)
    if args.report:
        Path(args.report).write_text(
            json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    _emit(
        {
            "cmd": "judge",
            "judgments": len(judgments),
            "unparsed": unparsed,
            "dimensions": {d: report[d]["win_rate_a"] for d in report},
        }
    )
    return 0


def _cmd_prompt(args: argparse.Namespace) -> int:
    if args.task:
        if args.system:
            print(SYSTEM_PROMPTS[args.task])
        else:
            print(TASK_PROMPTS[args.task])
        _emit({"cmd": "prompt", "task": args.task, "system": bool(args.system)})
    else:
        from .evaluation import build_judge_prompt

        print(build_judge_prompt(args.judge_dimension, "{output_a}", "{output_b}"))
        _emit({"cmd": "prompt", "judge_dimension": args.judge_dimension})
    return 0


def _cmd_rpc(args: argparse.Namespace) -> int:
    cfg = _loss_config(args)
    handled = rpc.serve(cfg)
    _emit({"cmd": "rpc", "handled": handled})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="verikit",
        description="Verifiable rewards, preference/surrogate losses, synthetic "
        "counting videos, schedules, and benchmark aggregation.",
    )
    parser.add_argument("--version", action="version", version=f"verikit {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="synthesize counting-video episodes")
    p.add_argument("--difficulty", choices=DIFFICULTY_LEVELS, default="hard")
    p.add_argument("--n", type=int, default=1, help="number of episodes")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.add_argument("--fps", type=float, default=3.0)
    p.add_argument("--duration", type=float, default=5.0)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--shapes-min", type=int, default=3)
    p.add_argument("--shapes-max", type=int, default=12)
    p.add_argument("--non-overlapping", action="store_true")
    p.add_argument("--background", default="0,0,0", help="solid background r,g,b")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("verify", help="audit synthesized episodes against their manifests")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("score", help="score a response file against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--out", default="")
    p.add_argument("--config", default="", help="LossConfig overrides as JSON")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("loss", help="evaluate a loss over a record file")
    p.add_argument("--kind", choices=("gspo", "joint_dpo"), required=True)
    p.add_argument("--rollouts", default="")
    p.add_argument("--preferences", default="")
    p.add_argument("--pooling", choices=("pooled", "by_kind"), default="pooled")
    p.add_argument("--grads-out", default="")
    p.add_argument("--config", default="", help="LossConfig overrides as JSON")
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--loss", choices=("gspo", "dpo"), required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--config", default="", help="LossConfig overrides as JSON")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("schedule", help="build a training schedule")
    p.add_argument("--grounding", type=int, default=3000)
    p.add_argument("--counting", type=int, default=2000)
    p.add_argument("--detection", type=int, default=10000)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--mode", choices=MODES, default="phase_level")
    p.add_argument("--perception-subphases", action="store_true")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("eval", help="detection metrics plus the hierarchical average")
    p.add_argument("--manifest", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--metric", choices=("accuracy", "recall", "f1"), default="accuracy")
    p.add_argument("--report", default="")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("judge", help="pairwise reasoning-behavior judging")
    p.add_argument("--pairs", required=True, help="records {id, output_a, output_b}")
    p.add_argument("--dimension", choices=sorted(JUDGE_DIMENSIONS), default="")
    p.add_argument("--mock", action="store_true")
    p.add_argument("--endpoint", default="")
    p.add_argument("--judge-id", default="judge")
    p.add_argument("--report", default="")
    p.set_defaults(func=_cmd_judge)

    p = sub.add_parser("prompt", help="emit a task prompt or the judge template")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--task", choices=sorted(TASK_PROMPTS), default="")
    group.add_argument("--judge-dimension", choices=sorted(JUDGE_DIMENSIONS), default="")
    p.add_argument("--system", action="store_true", help="emit the system prompt instead")
    p.set_defaults(func=_cmd_prompt)

    p = sub.add_parser("rpc", help="serve line-delimited JSON requests on stdin")
    p.add_argument("--config", default="", help="LossConfig overrides as JSON")
    p.set_defaults(func=_cmd_rpc)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - uniform runtime-error contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
