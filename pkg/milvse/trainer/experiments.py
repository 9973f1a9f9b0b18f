"""Multi-model experiments: the feature ablation, the K sweep and the grid search."""

import concurrent.futures
from dataclasses import dataclass
from itertools import repeat
from typing import Sequence

from milvse.data.dataset import PairedDataset
from milvse.retrieval.index import evaluate_split
from milvse.retrieval.metrics import RetrievalReport, average_reports
from milvse.trainer.config import AblationSpec, GridSpec, TrainConfig
from milvse.trainer.train import train
from milvse.utils.errors import ConfigError
from milvse.utils.logger import logger


@dataclass
class ExperimentResult:
    name: str
    config: TrainConfig
    reports: list[RetrievalReport]  # one per seed

    @property
    def report(self) -> RetrievalReport:
        return average_reports(self.reports)

    @property
    def nmr(self) -> float:
        return self.report.nMR


def train_and_evaluate(cfg: TrainConfig, dataset: PairedDataset, split: str) -> RetrievalReport:
    """Trains one model and evaluates its best checkpoint on `split`."""
    result = train(dataset, cfg)
    return evaluate_split(dataset, result.best, split)


def run_configs(
    dataset: PairedDataset, configs: Sequence[TrainConfig], split: str, workers: int = 1
) -> list[RetrievalReport]:
    """Reports in config order, trained in a process pool when workers > 1."""
    if workers <= 1:
        return [train_and_evaluate(cfg, dataset, split) for cfg in configs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(train_and_evaluate, configs, repeat(dataset), repeat(split)))


def _run_named(
    dataset: PairedDataset,
    named: Sequence[tuple[str, TrainConfig]],
    seeds: Sequence[int],
    split: str,
    workers: int,
) -> list[ExperimentResult]:
    jobs = [cfg.variant(seed=seed) for _, cfg in named for seed in seeds]
    reports = run_configs(dataset, jobs, split, workers)

    results = []
    for row, (name, cfg) in enumerate(named):
        result = ExperimentResult(name, cfg, reports[row * len(seeds) : (row + 1) * len(seeds)])
        logger.info(f"{name}: nMR={result.nmr:.2f} over {len(seeds)} seed(s)")
        results.append(result)
    return results


def run_ablation(
    dataset: PairedDataset,
    base: TrainConfig,
    spec: AblationSpec | None = None,
    workers: int = 1,
    split: str = "test",
) -> list[ExperimentResult]:
    """One row per configuration, each adding a feature to the row above."""
    spec = spec or AblationSpec()
    return _run_named(dataset, spec.configs(base), spec.seeds, split, workers)


def sweep_k(
    dataset: PairedDataset,
    base: TrainConfig,
    k_values: Sequence[int],
    seeds: Sequence[int] | None = None,
    workers: int = 1,
    split: str = "test",
) -> list[ExperimentResult]:
    if not k_values or any(k < 2 for k in k_values):
        raise ConfigError(f"K sweep values must be >= 2, got {list(k_values)}")
    named = [(f"K={k}", base.variant(K=k)) for k in k_values]
    return _run_named(dataset, named, seeds or [base.seed], split, workers)


@dataclass
class GridResult:
    best: TrainConfig
    results: list[ExperimentResult]


def grid_search(
    dataset: PairedDataset,
    base: TrainConfig,
    grid: GridSpec | None = None,
    workers: int = 1,
) -> GridResult:
    """Lowest validation nMR over d x K x alpha; earlier grid points win ties."""
    grid = grid or base.grid or GridSpec()
    named = [
        (f"d={d} K={k} alpha={alpha:g}", base.variant(d=d, K=k, alpha=alpha))
        for d, k, alpha in grid.points()
    ]
    results = _run_named(dataset, named, [base.seed], "val", workers)

    best = results[0]
    for result in results[1:]:
        if result.nmr < best.nmr:
            best = result
    logger.info(f"Best grid point: {best.name} (val nMR={best.nmr:.2f})")
    return GridResult(best.config, results)


def relative_improvement(results: Sequence[ExperimentResult]) -> list[float | None]:
    """Percent nMR reduction of each row against the row above; None for the first."""
    changes: list[float | None] = [None] if results else []
    for previous, current in zip(results, results[1:]):
        changes.append(100.0 * (previous.nmr - current.nmr) / previous.nmr)
    return changes
