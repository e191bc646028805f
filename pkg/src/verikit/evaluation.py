"""Detection metrics, hierarchical benchmark averaging, and the pairwise
reasoning-behavior judging protocol with a pluggable external judge."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Callable, Mapping, Sequence

from .core import GROUPS, POSITIVE_LABEL, DatasetManifest
from .parsers import JudgeVerdict, ParseFailure, parse_judgment
from .prompts import JUDGE_DIMENSIONS, JUDGE_PROMPT_TEMPLATE


@dataclass(frozen=True)
class MetricRow:
    subset_name: str
    group: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    n_samples: int
    n_missing: int = 0
    recall_defined: bool = True

    def to_record(self) -> dict[str, Any]:
        return {
            "subset_name": self.subset_name,
            "group": self.group,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n_samples": self.n_samples,
            "n_missing": self.n_missing,
            "recall_defined": self.recall_defined,
        }


def binary_metrics(
    preds: Sequence[Mapping[str, Any]], manifest: DatasetManifest
) -> list[MetricRow]:
    """Accuracy / precision / recall / F1 per subset, with the fake label as
    the positive class.

    A sample with no usable verdict counts as wrong (the opposite class is
    assumed) and is tallied in n_missing.
    """
    entries = manifest.by_id()
    verdicts: dict[str, str | None] = {}
    for pred in preds:
        pid = str(pred.get("id", ""))
        if pid not in entries:
            raise ValueError(f"prediction id {pid!r} not in manifest")
        v = pred.get("verdict")
        verdicts[pid] = v if v in ("real", "fake") else None

    subsets: dict[str, dict[str, Any]] = {}
    for entry in manifest.entries:
        if entry.task != "detection":
            continue
        stats = subsets.setdefault(
            entry.subset_name,
            {"group": entry.group, "tp": 0, "tn": 0, "fp": 0, "fn": 0, "missing": 0},
        )
        verdict = verdicts.get(entry.id)
        if verdict is None:
            stats["missing"] += 1
            verdict = "real" if entry.label == POSITIVE_LABEL else "fake"
        actual_pos = entry.label == POSITIVE_LABEL
        predicted_pos = verdict == POSITIVE_LABEL
        if actual_pos and predicted_pos:
            stats["tp"] += 1
        elif actual_pos:
            stats["fn"] += 1
        elif predicted_pos:
            stats["fp"] += 1
        else:
            stats["tn"] += 1

    rows = []
    for subset_name in sorted(subsets):
        s = subsets[subset_name]
        tp, tn, fp, fn = s["tp"], s["tn"], s["fp"], s["fn"]
        total = tp + tn + fp + fn
        accuracy = (tp + tn) / total if total else 0.0
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall_defined = (tp + fn) > 0
        recall = tp / (tp + fn) if recall_defined else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        rows.append(
            MetricRow(
                subset_name=subset_name,
                group=s["group"],
                accuracy=accuracy,
                precision=precision,
                recall=recall,
                f1=f1,
                n_samples=total,
                n_missing=s["missing"],
                recall_defined=recall_defined,
            )
        )
    return rows


def hierarchical_average(rows: Sequence[MetricRow], metric: str = "accuracy") -> float:
    """Mean of each group's subset mean, then the mean of the three group means."""
    by_group: dict[str, list[float]] = {g: [] for g in GROUPS}
    for row in rows:
        if row.group not in by_group:
            raise ValueError(f"unknown group {row.group!r}")
        by_group[row.group].append(getattr(row, metric))
    empty = [g for g, values in by_group.items() if not values]
    if empty:
        raise ValueError(f"no rows for group(s): {empty}")
    group_means = [sum(v) / len(v) for v in by_group.values()]
    return sum(group_means) / len(group_means)


def round_half_up(value: float, decimals: int = 1) -> float:
    """Presentation-only rounding; internals stay full precision."""
    quant = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(quant, rounding=ROUND_HALF_UP))


def format_metric_table(rows: Sequence[MetricRow], metric: str = "accuracy") -> str:
    """Delimited table mirroring the benchmark layout (values x100, one decimal)."""
    lines = [f"{'subset':<24} {'group':<12} {metric:>8}"]
    for group in GROUPS:
        for row in rows:
            if row.group != group:
                continue
            value = round_half_up(100.0 * getattr(row, metric))
            lines.append(f"{row.subset_name:<24} {row.group:<12} {value:>8.1f}")
    avg = round_half_up(100.0 * hierarchical_average(rows, metric))
    lines.append(f"{'Avg.':<24} {'':<12} {avg:>8.1f}")
    return "\n".join(lines)


@dataclass(frozen=True)
class PairwiseJudgment:
    sample_id: str
    dimension: str
    judge_id: str
    decision: str  # "A", "B" or "C"

    def __post_init__(self) -> None:
        if self.dimension not in JUDGE_DIMENSIONS:
            raise ValueError(f"unknown dimension {self.dimension!r}")
        if self.decision not in ("A", "B", "C"):
            raise ValueError(f"decision must be A, B or C, got {self.decision!r}")


def build_judge_prompt(dimension: str, output_a: str, output_b: str) -> str:
    """Instantiate the pairwise judging template for one dimension."""
    try:
        description = JUDGE_DIMENSIONS[dimension]
    except KeyError:
        raise ValueError(f"unknown dimension {dimension!r}") from None
    return JUDGE_PROMPT_TEMPLATE.format(
        dimension_name=dimension,
        dimension_description=description,
        output_a=output_a,
        output_b=output_b,
    )


def win_rate(
    judgments: Sequence[PairwiseJudgment],
    subject: str,
    dimension: str,
    include_ties: bool = True,
) -> float:
    """Fraction of judgments the subject wins on one dimension.

    include_ties keeps ties (and losses) in the denominator, the convention
    used for reported rates; include_ties=False divides by decisive
    judgments only.
    """
    if subject not in ("A", "B"):
        raise ValueError("subject must be A or B")
    relevant = [j for j in judgments if j.dimension == dimension]
    if not relevant:
        raise ValueError(f"no judgments for dimension {dimension!r}")
    wins = sum(1 for j in relevant if j.decision == subject)
    if include_ties:
        return wins / len(relevant)
    decisive = sum(1 for j in relevant if j.decision in ("A", "B"))
    return wins / decisive if decisive else 0.0


def win_rate_report(judgments: Sequence[PairwiseJudgment]) -> dict[str, Any]:
    """Per-dimension win/tie rates under both tie conventions, plus a
    per-judge breakdown."""
    report: dict[str, Any] = {}
    dimensions = sorted({j.dimension for j in judgments})
    for dimension in dimensions:
        relevant = [j for j in judgments if j.dimension == dimension]
        ties = sum(1 for j in relevant if j.decision == "C")
        entry = {
            "n": len(relevant),
            "tie_rate": ties / len(relevant),
            "win_rate_a": win_rate(relevant, "A", dimension),
            "win_rate_b": win_rate(relevant, "B", dimension),
            "win_rate_a_excl_ties": win_rate(relevant, "A", dimension, include_ties=False),
            "win_rate_b_excl_ties": win_rate(relevant, "B", dimension, include_ties=False),
            "per_judge": {},
        }
        for judge_id in sorted({j.judge_id for j in relevant}):
            subset = [j for j in relevant if j.judge_id == judge_id]
            entry["per_judge"][judge_id] = {
                "n": len(subset),
                "win_rate_a": win_rate(subset, "A", dimension),
                "win_rate_b": win_rate(subset, "B", dimension),
            }
        report[dimension] = entry
    return report


class JudgeTransportError(RuntimeError):
    """Raised when the judge endpoint keeps failing after retries."""


class JudgeClient:
    """Submit prompts to an external judge over HTTP, or deterministically
    canned verdicts in mock mode.

    Endpoint and credentials come from arguments or the JUDGE_ENDPOINT /
    JUDGE_API_KEY environment variables. Transport failures are retried with
    exponential backoff up to max_retries.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        mock: bool = False,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        transport: Callable[[str], str] | None = None,
        judge_id: str = "judge",
    ):
        self.endpoint = endpoint or os.environ.get("JUDGE_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("JUDGE_API_KEY", "")
        self.mock = mock
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.transport = transport
        self.judge_id = judge_id
        if not mock and transport is None and not self.endpoint:
            raise ValueError("judge endpoint not configured; set JUDGE_ENDPOINT or use mock mode")

    def submit(self, prompt: str) -> str:
        """Raw judge response for one prompt."""
        if self.mock:
            return self._mock_response(prompt)
        transport = self.transport or self._http_transport
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                return transport(prompt)
            except Exception as exc:  # noqa: BLE001 - transport errors are opaque
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise JudgeTransportError(
            f"judge request failed after {self.max_retries + 1} attempts: {last_error}"
        )

    def _http_transport(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        response = requests.post(
            self.endpoint, json={"prompt": prompt}, headers=headers, timeout=60
        )
        response.raise_for_status()
        try:
            return response.json().get("text", response.text)
        except ValueError:
            return response.text

    def _mock_response(self, prompt: str) -> str:
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        decision = "ABC"[digest[0] % 3]
        analysis = f"Deterministic mock verdict (key {digest.hex()[:8]})."
        return json.dumps({"analysis": analysis, "judgment": f"[[{decision}]]"})


def judge_pair(
    client: JudgeClient, sample_id: str, dimension: str, output_a: str, output_b: str
) -> PairwiseJudgment | ParseFailure:
    """Build the prompt, submit it, and parse the verdict."""
    raw = client.submit(build_judge_prompt(dimension, output_a, output_b))
    parsed = parse_judgment(raw)
    if isinstance(parsed, JudgeVerdict):
        return PairwiseJudgment(
            sample_id=sample_id,
            dimension=dimension,
            judge_id=client.judge_id,
            decision=parsed.decision,
        )
    return parsed
