"""Grid sweeps over an experiment config.

Every cell of the Cartesian product of the grid runs every seed of the base
config. Cells are independent runs with their own hash and output
directory, so they may execute in parallel worker processes. After all runs
finish, per-cell seed statistics go to ``summary.csv`` and the best cell of
each group (cells that differ only in learning rate) to ``best.csv``.
"""

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import sem

from ..common.config import config as app_config
from ..common.errors import ElephantLabError, ValidationError, handle_error
from ..common.gridspec import grid_cells
from ..common.logging import logger
from ..diagnostics.export import write_table
from .experiment import HARNESS_METRICS, REPORT_FILE, RunReport, run_seed, write_config_snapshot
from .experiment_config import ExperimentConfig, load_experiment_config

LEARNING_RATE_KEY = "optimizer.learning_rate"


@dataclass
class SweepResult:
    summary: pd.DataFrame
    best: pd.DataFrame
    reports: List[RunReport]
    directory: Path

    @property
    def aborted(self) -> int:
        return sum(r.aborted for r in self.reports)


def _run_one(config: ExperimentConfig, seed: int, resume: bool) -> RunReport:
    existing = config.run_dir(seed) / REPORT_FILE
    if resume and existing.exists():
        logger.info(f"Skipping completed cell {config.config_hash} seed {seed}")
        return RunReport.load(existing)
    try:
        return run_seed(config, seed)
    except ElephantLabError as e:
        handle_error(e, logger)
        return RunReport(config_hash=config.config_hash, seed=seed, harness=config.harness,
                         aborted=True, abort_reason=str(e))


def _run_packed(args: Tuple[ExperimentConfig, int, bool]) -> RunReport:
    return _run_one(*args)


def reference_grid(config: ExperimentConfig) -> Dict[str, List[Any]]:
    """Default sweep axes for the harness of ``config``.

    Classification adds the Elephant width and bias scale axes when the
    config uses Elephant units.

    Raises:
        ValidationError: For the diagnostics harness, which has nothing to tune
    """
    if config.harness in ("regression", "edit"):
        from ..experiments.regression import REGRESSION_LR_GRID
        return {LEARNING_RATE_KEY: list(REGRESSION_LR_GRID)}
    if config.harness == "classify":
        from ..experiments.classification import (CLASSIFY_A_GRID, CLASSIFY_LR_GRID, CLASSIFY_SIGMA_BIAS_GRID,
                                                  CLASSIFY_STEPS_PER_BATCH)
        grid = {LEARNING_RATE_KEY: list(CLASSIFY_LR_GRID), "classify.steps_per_batch": list(CLASSIFY_STEPS_PER_BATCH)}
        if config.activation["kind"] == "elephant":
            grid["activation.a"] = list(CLASSIFY_A_GRID)
            grid["network.sigma_bias"] = list(CLASSIFY_SIGMA_BIAS_GRID)
        return grid
    if config.harness == "dqn":
        from ..rl.dqn import BUFFER_SIZES, DQN_LR_GRID
        return {LEARNING_RATE_KEY: list(DQN_LR_GRID), "dqn.buffer_size": list(BUFFER_SIZES)}
    raise ValidationError(f"No reference grid for the {config.harness} harness")


def sweep_hash(config: ExperimentConfig, grid: Dict[str, List[Any]]) -> str:
    canonical = json.dumps({"base": config.config_hash, "grid": grid}, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _display(value: Any) -> Any:
    return json.dumps(value) if isinstance(value, (list, dict)) else value


def summarize(cells: Sequence[Dict[str, Any]], configs: Sequence[ExperimentConfig],
              reports: Sequence[RunReport], harness: str) -> pd.DataFrame:
    metric, _ = HARNESS_METRICS[harness]
    rows = []
    for index, (cell, cell_config) in enumerate(zip(cells, configs)):
        runs = [r for r in reports if r.config_hash == cell_config.config_hash]
        values = np.array([r.metrics.get(metric, np.nan) for r in runs if not r.aborted], dtype=np.float64)
        values = values[np.isfinite(values)]
        row = {"cell": index, "config_hash": cell_config.config_hash}
        row.update({key: _display(value) for key, value in cell.items()})
        row.update({
            "metric": metric,
            "seed_mean": float(np.mean(values)) if len(values) else np.nan,
            "seed_stderr": float(sem(values)) if len(values) > 1 else np.nan,
            "n_seeds": len(runs),
            "n_aborted": sum(r.aborted for r in runs),
        })
        rows.append(row)
    return pd.DataFrame(rows)


def best_cells(summary: pd.DataFrame, grid_keys: Sequence[str], direction: str) -> pd.DataFrame:
    """Best cell by seed mean within each group of cells sharing all non-learning-rate values."""
    ranked = summary.dropna(subset=["seed_mean"])
    if ranked.empty:
        return ranked
    ranked = ranked.sort_values("seed_mean", ascending=(direction == "min"), kind="stable")
    group_keys = [k for k in grid_keys if k != LEARNING_RATE_KEY]
    if not group_keys:
        return ranked.head(1).reset_index(drop=True)
    return ranked.groupby(group_keys, sort=True, dropna=False).head(1).sort_values("cell").reset_index(drop=True)


def sweep(config_or_path: Union[ExperimentConfig, str, Path], grid: Dict[str, List[Any]],
          resume: bool = False, workers: Optional[int] = None) -> SweepResult:
    """Run the Cartesian product of ``grid`` over the base config.

    Raises:
        ValidationError: If a grid key does not exist or an axis is empty
    """
    base = config_or_path
    if not isinstance(base, ExperimentConfig):
        base = load_experiment_config(config_or_path)
    for key, values in grid.items():
        base.get(key)
        if not values:
            raise ValidationError(f"Grid axis '{key}' is empty")

    cells = grid_cells(grid)
    configs = [base.with_overrides(cell) for cell in cells]
    for cell_config in configs:
        write_config_snapshot(cell_config)
    jobs = [(cell_config, seed, resume) for cell_config in configs for seed in cell_config.seeds]
    workers = int(workers or app_config.get("runner.workers", 1) or 1)
    logger.info(f"Sweep over {len(cells)} cells x {len(base.seeds)} seeds = {len(jobs)} runs, {workers} workers")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_packed, jobs))
    else:
        reports = [_run_packed(job) for job in jobs]

    directory = Path(base.output_dir) / f"sweep-{sweep_hash(base, grid)}"
    summary = summarize(cells, configs, reports, base.harness)
    best = best_cells(summary, list(grid), HARNESS_METRICS[base.harness][1])
    write_table(directory / "summary.csv", summary)
    write_table(directory / "best.csv", best)
    result = SweepResult(summary=summary, best=best, reports=reports, directory=directory)
    logger.info(f"Sweep finished: {len(summary)} cells, {result.aborted} aborted runs, summary in {directory}")
    return result
