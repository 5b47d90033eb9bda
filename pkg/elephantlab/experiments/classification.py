"""Class-incremental learning on split datasets.

Classes are grouped into tasks in label order (``0-1``, ``2-3``, ...). The
learner sees every training sample exactly once, task after task, in
mini-batches that carry no task marker. Nothing is reset between tasks.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import log_softmax, softmax

from ..common.errors import NonFiniteGradientError, SpecError
from ..common.logging import logger
from ..core.rng import RngState, make_rngs
from ..diagnostics.export import artifact_name, write_table
from ..nn.network import GradientBundle, Network, backward, forward, predict
from ..nn.optim import OptimizerState, optimizer_step
from ..runner.experiment_config import ExperimentConfig, network_from_config
from .base import HarnessReport, progress
from .mnist import LabeledDataset, load_mnist

CLASSIFY_LR_GRID = [3e-6, 1e-6, 3e-7, 1e-7, 3e-8, 1e-8]
CLASSIFY_STEPS_PER_BATCH = [1, 2]
CLASSIFY_A_GRID = [0.02, 0.04, 0.08, 0.16, 0.32]
CLASSIFY_SIGMA_BIAS_GRID = [0.04, 0.08, 0.16, 0.32, 0.64]

EVAL_CHUNK = 2000

Batch = Tuple[np.ndarray, np.ndarray]


@dataclass
class TaskStream:
    """Mini-batches ordered task by task.

    ``batches`` is all the learner consumes. ``task_of_batch`` is bookkeeping
    for reports and is never read while training.
    """

    batches: List[Batch]
    task_of_batch: List[int]
    task_classes: List[List[int]]

    def __len__(self) -> int:
        return len(self.batches)

    @property
    def n_tasks(self) -> int:
        return len(self.task_classes)

    @property
    def n_samples(self) -> int:
        return sum(len(y) for _, y in self.batches)


def task_classes(n_classes: int, classes_per_task: int) -> List[List[int]]:
    if classes_per_task < 1 or n_classes % classes_per_task:
        raise SpecError(f"{n_classes} classes cannot be split into tasks of {classes_per_task}")
    return [list(range(start, start + classes_per_task)) for start in range(0, n_classes, classes_per_task)]


def make_split_stream(ds: LabeledDataset, classes_per_task: int, batch: int, rng: RngState) -> TaskStream:
    """Group ``ds`` into tasks of consecutive classes and cut each task into shuffled mini-batches.

    Raises:
        SpecError: If ``n_classes`` is not divisible by ``classes_per_task``
    """
    if batch < 1:
        raise SpecError(f"Batch size must be positive, got {batch}")
    groups = task_classes(ds.n_classes, classes_per_task)
    batches, owners = [], []
    for task, classes in enumerate(groups):
        indices = np.flatnonzero(np.isin(ds.labels, classes))
        indices = indices[rng.permutation(len(indices))]
        for start in range(0, len(indices), batch):
            chunk = indices[start:start + batch]
            batches.append((ds.inputs[chunk], ds.labels[chunk]))
            owners.append(task)
    return TaskStream(batches=batches, task_of_batch=owners, task_classes=groups)


def cross_entropy_gradient(net: Network, x: np.ndarray, y: np.ndarray) -> Tuple[float, GradientBundle]:
    """Mean softmax cross entropy over the batch and its gradient."""
    logits, cache = forward(net, x)
    loss = -float(np.mean(log_softmax(logits, axis=1)[np.arange(len(y)), y]))
    d_logits = softmax(logits, axis=1)
    d_logits[np.arange(len(y)), y] -= 1.0
    return loss, backward(net, cache, d_logits / len(y))


def predict_labels(net: Network, inputs: np.ndarray) -> np.ndarray:
    parts = [np.argmax(predict(net, inputs[i:i + EVAL_CHUNK]), axis=1) for i in range(0, len(inputs), EVAL_CHUNK)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def accuracy_by_task(net: Network, ds: LabeledDataset, groups: List[List[int]]) -> Tuple[float, List[float]]:
    """Overall accuracy and accuracy restricted to each task's classes."""
    predicted = predict_labels(net, ds.inputs)
    correct = predicted == ds.labels
    per_task = []
    for classes in groups:
        mask = np.isin(ds.labels, classes)
        per_task.append(float(np.mean(correct[mask])) if np.any(mask) else float("nan"))
    return float(np.mean(correct)), per_task


@dataclass
class ClassificationReport(HarnessReport):
    test_accuracy: float = float("nan")
    task_accuracy: List[float] = field(default_factory=list)
    trajectory: List[Dict[str, float]] = field(default_factory=list)
    batches: int = 0
    samples_seen: int = 0
    final_loss: float = float("nan")

    def metrics(self) -> Dict[str, float]:
        metrics = {
            "test_accuracy": self.test_accuracy,
            "batches": self.batches,
            "samples_seen": self.samples_seen,
            "final_loss": self.final_loss,
        }
        for task, value in enumerate(self.task_accuracy):
            metrics[f"task{task}_accuracy"] = value
        return metrics

    def write_artifacts(self, run_dir: Path) -> Dict[str, str]:
        if not self.trajectory:
            return {}
        path = write_table(run_dir / artifact_name("trajectory", self.config_hash), pd.DataFrame(self.trajectory))
        return {"trajectory": str(path)}


def _limit(ds: LabeledDataset, limit: Optional[int], rng: RngState) -> LabeledDataset:
    if not limit or limit >= len(ds):
        return ds
    return ds.take(np.sort(rng.choice(len(ds), size=int(limit), replace=False)))


def run_class_incremental(config: ExperimentConfig, seed: int, train: Optional[LabeledDataset] = None,
                          test: Optional[LabeledDataset] = None,
                          show_progress: bool = False) -> ClassificationReport:
    """Single boundary-free pass over a split stream with ``E`` updates per mini-batch.

    The datasets default to MNIST from ``classify.data_dir``. Accuracy per task
    is recorded every ``classify.trajectory_every`` batches on a fixed test
    subsample; the final accuracy uses the full test set.
    """
    section = config.classify
    if train is None or test is None:
        train, test = load_mnist(section["data_dir"])
    rngs = make_rngs(seed, ["init", "data", "stream", "eval"])
    train = _limit(train, section["max_train_samples"], rngs["data"])
    test = _limit(test, section["max_test_samples"], rngs["data"])

    net = network_from_config(config, train.dim, train.n_classes, rngs["init"])
    state = OptimizerState.from_config(config.optimizer)
    stream = make_split_stream(train, int(section["classes_per_task"]), int(section["batch_size"]), rngs["stream"])
    eval_size = min(int(section["trajectory_samples"]), len(test))
    eval_set = test.take(np.sort(rngs["eval"].choice(len(test), size=eval_size, replace=False)))
    steps_per_batch = int(section["steps_per_batch"])
    every = int(section["trajectory_every"])
    if steps_per_batch < 1 or every < 1:
        raise SpecError("classify.steps_per_batch and classify.trajectory_every must be positive")

    report = ClassificationReport(seed=seed, config_hash=config.config_hash, network=net)
    logger.info(f"Class-incremental {config.config_hash} seed {seed}: {stream.n_tasks} tasks, "
                f"{len(stream)} batches, {stream.n_samples} samples")

    for index, (x, y) in enumerate(progress(stream.batches, show_progress, "batches", len(stream)), start=1):
        try:
            for _ in range(steps_per_batch):
                loss, grad = cross_entropy_gradient(net, x, y)
                optimizer_step(state, net, grad)
        except NonFiniteGradientError as e:
            report.abort(str(e))
            break
        report.batches = index
        report.samples_seen += len(y)
        report.final_loss = loss
        if not np.isfinite(loss) or loss > section["divergence_loss"]:
            report.abort(f"loss {loss:.6g} exceeded {section['divergence_loss']:g} at batch {index}")
            break
        if index % every == 0:
            overall, per_task = accuracy_by_task(net, eval_set, stream.task_classes)
            row = {"batch": index, "samples_seen": report.samples_seen, "accuracy": overall}
            row.update({f"task{t}": value for t, value in enumerate(per_task)})
            report.trajectory.append(row)
            logger.debug(f"batch {index}: loss={loss:.4g} accuracy={overall:.4f}")

    report.test_accuracy, report.task_accuracy = accuracy_by_task(net, test, stream.task_classes)
    if report.aborted:
        logger.warning(f"Run {config.config_hash} seed {seed} aborted: {report.abort_reason}")
    else:
        logger.info(f"Run {config.config_hash} seed {seed} finished: test accuracy {report.test_accuracy:.4f}")
    return report
