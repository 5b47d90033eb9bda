"""Running an experiment config: one harness run per seed, artifacts on disk.

Layout under ``output_dir``::

    <hash>/config.yaml
    <hash>/<seed>/report.json
    <hash>/<seed>/network.npz
    <hash>/<seed>/run.log
    <hash>/<seed>/*.csv

``report.json`` is written last, so its presence marks a completed seed and
``resume`` skips it.
"""

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import yaml

from ..common.config import config as app_config
from ..common.errors import ElephantLabError, ValidationError, handle_error
from ..common.logging import logger, run_log_file, run_logger
from ..experiments.base import HarnessReport
from ..nn.checkpoint import save_checkpoint
from .experiment_config import ExperimentConfig, load_experiment_config

# harness -> (primary metric, "min" or "max")
HARNESS_METRICS = {
    "regression": ("test_mse", "min"),
    "edit": ("spill", "min"),
    "classify": ("test_accuracy", "max"),
    "dqn": ("final_return", "max"),
    "diagnostics": ("representation_sparsity", "max"),
}

REPORT_FILE = "report.json"
CHECKPOINT_FILE = "network.npz"
LOG_FILE = "run.log"


@dataclass
class RunReport:
    config_hash: str
    seed: int
    harness: str
    metrics: Dict[str, Any] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    wall_clock: float = 0.0
    aborted: bool = False
    abort_reason: Optional[str] = None

    @property
    def primary_metric(self) -> Any:
        return self.metrics.get(HARNESS_METRICS[self.harness][0])

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "RunReport":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def _harness(name: str) -> Callable[..., HarnessReport]:
    # imported lazily so that loading the runner stays cheap
    if name == "regression":
        from ..experiments.regression import run_streaming_regression
        return run_streaming_regression
    if name == "edit":
        from ..experiments.regression import run_point_edit
        return run_point_edit
    if name == "classify":
        from ..experiments.classification import run_class_incremental
        return run_class_incremental
    if name == "dqn":
        from ..rl.dqn import dqn_train
        return dqn_train
    if name == "diagnostics":
        from .diagnose import run_diagnostics
        return run_diagnostics
    raise ValidationError(f"Unknown harness '{name}'")


def run_seed(config: ExperimentConfig, seed: int, show_progress: bool = False,
             checkpoint: Optional[Union[str, Path]] = None) -> RunReport:
    """Run one seed and write its artifacts; the report is written last."""
    run_dir = config.run_dir(seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    log = run_logger(config.config_hash, seed)

    with run_log_file(run_dir / LOG_FILE) as log_path:
        log.info(f"Starting {config.harness} run")
        started = time.perf_counter()

        harness = _harness(config.harness)
        if config.harness == "diagnostics":
            outcome = harness(config, seed, checkpoint=checkpoint)
        elif config.harness == "edit":
            outcome = harness(config, seed)
        else:
            outcome = harness(config, seed, show_progress=show_progress)

        artifacts = outcome.write_artifacts(run_dir)
        if outcome.network is not None and config.harness != "diagnostics":
            artifacts["network"] = str(save_checkpoint(outcome.network, run_dir / CHECKPOINT_FILE))
        artifacts["log"] = str(log_path)
        report = RunReport(config_hash=config.config_hash, seed=seed, harness=config.harness,
                           metrics=outcome.metrics(), artifacts=artifacts,
                           wall_clock=time.perf_counter() - started,
                           aborted=outcome.aborted, abort_reason=outcome.abort_reason)
        log.info(f"Finished in {report.wall_clock:.1f}s: "
                 f"{HARNESS_METRICS[config.harness][0]}={report.primary_metric}")
    report.save(run_dir / REPORT_FILE)
    return report


def write_config_snapshot(config: ExperimentConfig) -> Path:
    path = Path(config.output_dir) / config.config_hash / "config.yaml"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config.to_dict(), sort_keys=True), encoding="utf-8")
    return path


def run_experiment(config_or_path: Union[ExperimentConfig, str, Path], seeds: Optional[Sequence[int]] = None,
                   resume: bool = False, show_progress: Optional[bool] = None,
                   checkpoint: Optional[Union[str, Path]] = None) -> List[RunReport]:
    """Run every seed of an experiment and return one report per seed.

    A seed whose harness raises a known error is reported as aborted and the
    remaining seeds still run.
    """
    config = config_or_path
    if not isinstance(config, ExperimentConfig):
        config = load_experiment_config(config_or_path)
    if seeds is not None:
        config = config.with_overrides({"seeds": list(seeds)})
    if show_progress is None:
        show_progress = bool(app_config.get("runner.progress", False))
    write_config_snapshot(config)

    reports = []
    for seed in config.seeds:
        existing = config.run_dir(seed) / REPORT_FILE
        if resume and existing.exists():
            logger.info(f"Skipping completed seed {seed} of {config.config_hash}")
            reports.append(RunReport.load(existing))
            continue
        try:
            reports.append(run_seed(config, seed, show_progress, checkpoint))
        except ElephantLabError as e:
            handle_error(e, logger)
            reports.append(RunReport(config_hash=config.config_hash, seed=seed, harness=config.harness,
                                     aborted=True, abort_reason=str(e)))
    return reports


def exit_code(reports: Sequence[RunReport]) -> int:
    """0 when no run aborted, 1 otherwise."""
    return 1 if any(r.aborted for r in reports) else 0
