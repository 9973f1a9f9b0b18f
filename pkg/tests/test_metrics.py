import math

import numpy as np
import pytest

from milvse.retrieval.index import EmbeddingIndex, rank_in_index
from milvse.retrieval.metrics import (
    average_reports,
    format_table,
    report_from_ranks,
    write_report,
)
from milvse.utils.errors import ContractError, DatasetError


def test_metrics_from_hand_computed_ranks():
    report = report_from_ranks([1, 3, 7, 20], N=20)
    assert (report.MR, report.R1, report.R5, report.R10) == (3, 25.0, 50.0, 75.0)
    perfect = report_from_ranks([1] * 6, N=6)
    assert (perfect.MR, perfect.R1, perfect.R5, perfect.R10) == (1, 100.0, 100.0, 100.0)


def test_normalized_median_rank_is_a_percentage():
    assert report_from_ranks([1578], N=4999).nMR == pytest.approx(31.57, abs=0.01)
    assert report_from_ranks([426], N=11300).nMR == pytest.approx(3.77, abs=0.01)


def test_rank_range_and_empty_split_are_rejected():
    with pytest.raises(ContractError):
        report_from_ranks([0, 2], N=5)
    with pytest.raises(ContractError):
        report_from_ranks([6], N=5)
    with pytest.raises(DatasetError):
        report_from_ranks([], N=5)


def test_table_layout_and_json(tmp_path):
    table = format_table([("mivise", report_from_ranks([1578], N=4999))])
    header, rule, row = table.splitlines()
    assert [c.strip() for c in header.split("|")] == ["Method", "MR (nMR)", "R@1", "R@5", "R@10"]
    assert "1578 (31.57)" in row
    path = write_report(report_from_ranks([1, 2], N=4), tmp_path / "report.json")
    assert '"nMR": 25.0' in path.read_text(encoding="utf-8")


def test_seed_average_pools_ranks():
    merged = average_reports([report_from_ranks([1, 3], 10), report_from_ranks([2, 2], 10)])
    assert merged.Q == 4 and merged.MR == 1.5 and merged.R1 == 25.0


def brute_force_report(query_sets, item_sets, truths):
    """Nested-loop scores, pessimistic ranks and metrics, written from the definitions."""
    ranks = []
    for query, truth in zip(query_sets, truths):
        scores = []
        for item in item_sets:
            best = -math.inf
            for q in query:
                for v in item:
                    best = max(best, float(sum(a * b for a, b in zip(q, v))))
            scores.append(best)
        target = scores[truth]
        better = sum(s > target for s in scores)
        tied = sum(s == target for n, s in enumerate(scores) if n != truth)
        ranks.append(1 + better + tied)
    ordered = sorted(ranks)
    median = ordered[(len(ordered) + 1) // 2 - 1]
    recalls = [100.0 * sum(r <= k for r in ranks) / len(ranks) for k in (1, 5, 10)]
    return ranks, median, recalls


def random_sets(rng, count, K, d, discrete):
    if discrete:
        # Signed basis rows: every dot product is exactly -1, 0 or 1
        sets = np.zeros((count, K, d))
        axes = rng.integers(0, d, size=(count, K))
        signs = rng.choice([-1.0, 1.0], size=(count, K))
        for n in range(count):
            sets[n, np.arange(K), axes[n]] = signs[n]
        return sets
    sets = rng.standard_normal((count, K, d))
    return sets / np.linalg.norm(sets, axis=-1, keepdims=True)


@pytest.mark.parametrize("discrete", [False, True])
def test_evaluation_matches_brute_force_oracle(discrete):
    rng = np.random.default_rng(11 if discrete else 12)
    for trial in range(50):
        N, Q = int(rng.integers(1, 51)), int(rng.integers(1, 51))
        K, d = int(rng.integers(1, 5)), 6
        items = random_sets(rng, N, K, d, discrete)
        queries = random_sets(rng, Q, K, d, discrete)
        truths = rng.integers(0, N, size=Q)
        index = EmbeddingIndex([f"v{n:03d}" for n in range(N)], items)

        ranks = [rank_in_index(q, index, index.ids[t]) for q, t in zip(queries, truths)]
        report = report_from_ranks(ranks, N)
        expected_ranks, median, recalls = brute_force_report(queries, items, truths)
        assert ranks == expected_ranks, f"trial {trial}"
        assert report.MR == median
        assert [report.R1, report.R5, report.R10] == recalls
