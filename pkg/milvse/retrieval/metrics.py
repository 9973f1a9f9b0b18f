"""Rank-based retrieval metrics: median rank, normalized median rank, recall@k."""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from milvse.utils.errors import ContractError, DatasetError
from milvse.utils.logger import logger


RECALL_CUTOFFS = (1, 5, 10)


@dataclass
class RetrievalReport:
    ranks: list[int]
    N: int
    Q: int
    MR: float
    nMR: float  # percent of the database size
    R1: float
    R5: float
    R10: float

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "Q": self.Q,
            "MR": self.MR,
            "nMR": self.nMR,
            "R1": self.R1,
            "R5": self.R5,
            "R10": self.R10,
            "ranks": list(self.ranks),
        }


def lower_median(values: Sequence[int]) -> int:
    ordered = sorted(values)
    return ordered[math.ceil(len(ordered) / 2) - 1]


def report_from_ranks(ranks: Sequence[int], N: int) -> RetrievalReport:
    if not ranks:
        raise DatasetError("No queries to evaluate.")
    ranks = [int(r) for r in ranks]
    if any(r < 1 or r > N for r in ranks):
        raise ContractError(f"Ranks must lie in [1, {N}]")

    Q = len(ranks)
    MR = lower_median(ranks)
    recalls = [100.0 * sum(r <= k for r in ranks) / Q for k in RECALL_CUTOFFS]
    return RetrievalReport(ranks, N, Q, float(MR), 100.0 * MR / N, *recalls)


def average_reports(reports: Sequence[RetrievalReport]) -> RetrievalReport:
    """Seed-averaged metrics; ranks are pooled."""
    if not reports:
        raise ContractError("Nothing to average.")
    if len(reports) == 1:
        return reports[0]
    mean = lambda field: float(np.mean([getattr(r, field) for r in reports]))  # noqa: E731
    return RetrievalReport(
        ranks=[rank for r in reports for rank in r.ranks],
        N=reports[0].N,
        Q=sum(r.Q for r in reports),
        MR=mean("MR"),
        nMR=mean("nMR"),
        R1=mean("R1"),
        R5=mean("R5"),
        R10=mean("R10"),
    )


def _format_mr(mr: float) -> str:
    return f"{mr:.0f}" if float(mr).is_integer() else f"{mr:.1f}"


def format_table(rows: Sequence[tuple[str, RetrievalReport]]) -> str:
    header = ("Method", "MR (nMR)", "R@1", "R@5", "R@10")
    lines = [
        (name, f"{_format_mr(r.MR)} ({r.nMR:.2f})", f"{r.R1:.2f}", f"{r.R5:.2f}", f"{r.R10:.2f}")
        for name, r in rows
    ]
    widths = [max(len(row[i]) for row in [header, *lines]) for i in range(len(header))]

    def render(cells) -> str:
        return " | ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip()

    rule = "-+-".join("-" * width for width in widths)
    return "\n".join([render(header), rule, *(render(line) for line in lines)])


def write_report(report: RetrievalReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as file:
        json.dump(report.to_json(), file, indent=2, ensure_ascii=False)
    logger.info(f"Retrieval report written to {path}")
    return path


def write_table_csv(
    rows: Sequence[tuple[str, RetrievalReport]],
    path: Path,
    improvements: Sequence[float | None] | None = None,
) -> Path:
    """One line per method; relative nMR improvement over the row above when given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    improvements = improvements or [None] * len(rows)
    with path.open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(["method", "MR", "nMR", "R1", "R5", "R10", "relative_improvement"])
        for (name, r), change in zip(rows, improvements):
            writer.writerow(
                [name, r.MR, f"{r.nMR:.4f}", r.R1, r.R5, r.R10, "" if change is None else f"{change:.4f}"]
            )
    logger.info(f"Table with {len(rows)} rows written to {path}")
    return path
