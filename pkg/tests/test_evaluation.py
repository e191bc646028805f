import json

import numpy as np
import pytest

from verikit.core import DatasetManifest, ManifestEntry
from verikit.evaluation import (
    JudgeClient,
    JudgeTransportError,
    MetricRow,
    PairwiseJudgment,
    binary_metrics,
    build_judge_prompt,
    hierarchical_average,
    judge_pair,
    round_half_up,
    win_rate,
    win_rate_report,
)
from verikit.parsers import JudgeVerdict, parse_judgment

# Published per-subset accuracies used for the aggregation checks.
STRONG_ROW = {
    "ID": [93.1],
    "OOD": [91.4, 78.1, 93.6, 96.7, 94.5, 99.4],
    "OOD-MintVid": [79.0, 56.2, 84.5, 86.6, 80.8, 86.0, 85.8, 86.3, 67.6, 96.1],
}
BASELINE_ROW = {
    "ID": [87.6],
    "OOD": [86.8, 71.1, 80.7, 83.4, 79.4, 85.9],
    "OOD-MintVid": [57.4, 55.2, 62.2, 49.2, 46.2, 46.6, 41.1, 49.3, 41.4, 73.3],
}


def rows_from(values_by_group):
    rows = []
    for group, values in values_by_group.items():
        for i, value in enumerate(values):
            rows.append(
                MetricRow(
                    subset_name=f"{group.lower()}-{i}",
                    group=group,
                    accuracy=value,
                    precision=0.0,
                    recall=0.0,
                    f1=0.0,
                    n_samples=1,
                )
            )
    return rows


def detection_entry(id, label, subset, group):
    return ManifestEntry(id, f"{id}.mp4", label, subset, group, "detection", {})


def confusion_oracle(pairs):
    """Direct confusion-matrix count with fake as the positive class."""
    tp = sum(1 for actual, pred in pairs if actual == "fake" and pred == "fake")
    tn = sum(1 for actual, pred in pairs if actual == "real" and pred == "real")
    fp = sum(1 for actual, pred in pairs if actual == "real" and pred == "fake")
    fn = sum(1 for actual, pred in pairs if actual == "fake" and pred == "real")
    return tp, tn, fp, fn


class TestBinaryMetrics:
    def test_all_correct(self):
        manifest = DatasetManifest(
            entries=(
                detection_entry("a", "fake", "S", "ID"),
                detection_entry("b", "real", "S", "ID"),
            )
        )
        rows = binary_metrics(
            [{"id": "a", "verdict": "fake"}, {"id": "b", "verdict": "real"}], manifest
        )
        assert rows[0].accuracy == 1.0
        assert rows[0].recall == 1.0
        assert rows[0].f1 == 1.0

    def test_hand_counted_confusion(self):
        # 2 fakes predicted real, 2 reals predicted real: acc .5, recall 0, f1 0.
        manifest = DatasetManifest(
            entries=tuple(
                detection_entry(f"f{i}", "fake", "S", "ID") for i in range(2)
            )
            + tuple(detection_entry(f"r{i}", "real", "S", "ID") for i in range(2))
        )
        preds = [{"id": e.id, "verdict": "real"} for e in manifest.entries]
        row = binary_metrics(preds, manifest)[0]
        assert row.accuracy == 0.5
        assert row.recall == 0.0
        assert row.f1 == 0.0

    def test_no_fakes_recall_flagged(self):
        manifest = DatasetManifest(
            entries=(detection_entry("r1", "real", "S", "ID"),)
        )
        row = binary_metrics([{"id": "r1", "verdict": "real"}], manifest)[0]
        assert row.recall == 0.0
        assert not row.recall_defined

    def test_missing_prediction_counts_wrong_and_flagged(self):
        manifest = DatasetManifest(
            entries=(
                detection_entry("a", "fake", "S", "ID"),
                detection_entry("b", "fake", "S", "ID"),
            )
        )
        row = binary_metrics([{"id": "a", "verdict": "fake"}], manifest)[0]
        assert row.accuracy == 0.5
        assert row.n_missing == 1

    def test_unknown_id_rejected(self):
        manifest = DatasetManifest(entries=(detection_entry("a", "fake", "S", "ID"),))
        with pytest.raises(ValueError, match="ghost"):
            binary_metrics([{"id": "ghost", "verdict": "fake"}], manifest)

    def test_matches_confusion_oracle_on_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 30))
            labels = ["fake" if rng.random() < 0.5 else "real" for _ in range(n)]
            verdicts = ["fake" if rng.random() < 0.5 else "real" for _ in range(n)]
            manifest = DatasetManifest(
                entries=tuple(
                    detection_entry(f"s{i}", labels[i], "S", "ID") for i in range(n)
                )
            )
            preds = [{"id": f"s{i}", "verdict": verdicts[i]} for i in range(n)]
            row = binary_metrics(preds, manifest)[0]
            tp, tn, fp, fn = confusion_oracle(list(zip(labels, verdicts)))
            assert row.accuracy == pytest.approx((tp + tn) / n)
            if tp + fn:
                assert row.recall == pytest.approx(tp / (tp + fn))
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            assert row.f1 == pytest.approx(f1, abs=1e-12)


class TestHierarchicalAverage:
    def test_strong_row_reproduces_published_average(self):
        avg = hierarchical_average(rows_from(STRONG_ROW), "accuracy")
        assert abs(avg - 88.8) < 0.05
        assert round_half_up(avg) == 88.8

    def test_baseline_row_reproduces_published_average(self):
        avg = hierarchical_average(rows_from(BASELINE_ROW), "accuracy")
        assert abs(avg - 73.7) < 0.05
        assert round_half_up(avg) == 73.7

    def test_idempotent_on_constant_rows(self):
        rows = rows_from({"ID": [70.0], "OOD": [70.0, 70.0], "OOD-MintVid": [70.0]})
        assert hierarchical_average(rows) == pytest.approx(70.0)

    def test_permutation_within_group_invariant(self):
        rows = rows_from(STRONG_ROW)
        shuffled = list(reversed(rows))
        assert hierarchical_average(rows) == pytest.approx(hierarchical_average(shuffled))

    def test_moving_row_between_groups_changes_average(self):
        rows = rows_from({"ID": [90.0, 50.0], "OOD": [70.0], "OOD-MintVid": [70.0]})
        moved = rows_from({"ID": [90.0], "OOD": [70.0, 50.0], "OOD-MintVid": [70.0]})
        assert hierarchical_average(rows) != pytest.approx(hierarchical_average(moved))

    def test_empty_group_rejected(self):
        rows = rows_from({"ID": [90.0], "OOD": [70.0], "OOD-MintVid": []})
        with pytest.raises(ValueError, match="OOD-MintVid"):
            hierarchical_average(rows)


class TestJudgePrompt:
    def test_contains_literal_delimiters(self):
        prompt = build_judge_prompt("Component Granularity", "aaa", "bbb")
        assert "[The Start of Assistant A’s Analysis]" in prompt
        assert "[The End of Assistant B’s Analysis]" in prompt

    def test_dimension_description_inlined(self):
        prompt = build_judge_prompt("Component Granularity", "a", "b")
        assert "fine-grained components" in prompt

    def test_swapping_payloads_changes_only_payload_blocks(self):
        p1 = build_judge_prompt("Physics Depth", "AAA", "BBB")
        p2 = build_judge_prompt("Physics Depth", "BBB", "AAA")
        assert p1.replace("AAA", "X").replace("BBB", "AAA").replace("X", "BBB") == p2

    def test_unknown_dimension(self):
        with pytest.raises(ValueError):
            build_judge_prompt("Vibes", "a", "b")


def judgment(decision, dimension="Physics Depth", judge="j1", sample="s"):
    return PairwiseJudgment(sample_id=sample, dimension=dimension, judge_id=judge, decision=decision)


class TestWinRate:
    def test_all_a(self):
        judgments = [judgment("A") for _ in range(5)]
        assert win_rate(judgments, "A", "Physics Depth") == 1.0

    def test_half(self):
        judgments = [judgment(d) for d in ("A", "B", "C", "A")]
        assert win_rate(judgments, "A", "Physics Depth") == 0.5

    def test_partition_sums_to_one(self):
        rng = np.random.default_rng(3)
        decisions = [("A", "B", "C")[int(rng.integers(0, 3))] for _ in range(60)]
        judgments = [judgment(d) for d in decisions]
        a = win_rate(judgments, "A", "Physics Depth")
        b = win_rate(judgments, "B", "Physics Depth")
        ties = sum(1 for d in decisions if d == "C") / len(decisions)
        assert a + b + ties == pytest.approx(1.0)

    def test_tie_exclusive_convention(self):
        judgments = [judgment(d) for d in ("A", "C", "C", "B")]
        assert win_rate(judgments, "A", "Physics Depth", include_ties=False) == 0.5
        assert win_rate(judgments, "A", "Physics Depth") == 0.25

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            win_rate([], "A", "Physics Depth")

    def test_report_contains_both_conventions_and_judges(self):
        judgments = [
            judgment("A", judge="j1"),
            judgment("B", judge="j1"),
            judgment("C", judge="j2"),
            judgment("A", judge="j2"),
        ]
        report = win_rate_report(judgments)
        entry = report["Physics Depth"]
        assert entry["n"] == 4
        assert set(entry["per_judge"]) == {"j1", "j2"}
        assert entry["win_rate_a"] == 0.5
        assert entry["win_rate_a_excl_ties"] == pytest.approx(2 / 3)


class TestJudgeClient:
    def test_mock_deterministic(self):
        client = JudgeClient(mock=True)
        prompt = build_judge_prompt("Relational Logic", "a", "b")
        assert client.submit(prompt) == client.submit(prompt)
        parsed = parse_judgment(client.submit(prompt))
        assert isinstance(parsed, JudgeVerdict)

    def test_retry_then_success(self):
        calls = {"n": 0}

        def flaky(prompt):
            calls["n"] += 1
            if calls["n"] < 3:
                raise TimeoutError("boom")
            return json.dumps({"analysis": "ok", "judgment": "[[B]]"})

        client = JudgeClient(transport=flaky, max_retries=3, backoff_s=0.0)
        result = judge_pair(client, "s1", "Physics Depth", "a", "b")
        assert isinstance(result, PairwiseJudgment)
        assert result.decision == "B"
        assert calls["n"] == 3

    def test_retries_exhausted(self):
        def always_fails(prompt):
            raise TimeoutError("down")

        client = JudgeClient(transport=always_fails, max_retries=2, backoff_s=0.0)
        with pytest.raises(JudgeTransportError, match="3 attempts"):
            client.submit("x")

    def test_unconfigured_rejected(self, monkeypatch):
        monkeypatch.delenv("JUDGE_ENDPOINT", raising=False)
        with pytest.raises(ValueError, match="endpoint"):
            JudgeClient()

    def test_canned_sample_routes_to_decision_a(self):
        raw = json.dumps(
            {
                "analysis": "Assistant A demonstrates superior granular analysis.",
                "judgment": "[[A]]",
            }
        )
        client = JudgeClient(transport=lambda prompt: raw, max_retries=0)
        result = judge_pair(client, "s1", "Component Granularity", "a", "b")
        assert isinstance(result, PairwiseJudgment)
        assert result.decision == "A"
