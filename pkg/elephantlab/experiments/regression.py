"""Streaming sine regression and the point-edit experiment.

The learner sees a sorted stream of ``(x, sin(pi x))`` pairs once, one sample
at a time, and after every sample is scored on evenly spaced test inputs.
The point-edit experiment pretrains a network, then moves its prediction at one
input and measures how much the rest of the function moved with it.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..common.errors import DegenerateNetworkError, InvalidInputError, NonFiniteGradientError
from ..common.logging import logger
from ..core.rng import RngState, make_rngs
from ..diagnostics.export import artifact_name, write_curve, write_ntk_curve, write_table
from ..diagnostics.kernels import NtkCurve, normalized_ntk_curve
from ..nn.network import Network, backward, forward, predict
from ..nn.optim import OptimizerState, optimizer_step
from ..runner.experiment_config import ExperimentConfig, network_from_config
from .base import HarnessReport, progress

REGRESSION_LR_GRID = [3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5]


@dataclass
class RegressionStream:
    """Pairs ``(x_i, sin(pi x_i))`` with strictly increasing ``x``."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        if self.xs.shape != self.ys.shape or self.xs.ndim != 1:
            raise InvalidInputError("Stream inputs and targets must be matching vectors")
        if np.any(np.diff(self.xs) <= 0):
            raise InvalidInputError("Stream inputs must be strictly increasing")

    def __len__(self) -> int:
        return len(self.xs)

    def __iter__(self) -> Iterator[Tuple[float, float]]:
        return iter(zip(self.xs.tolist(), self.ys.tolist()))


def sine_target(x) -> np.ndarray:
    return np.sin(np.pi * np.asarray(x, dtype=np.float64))


def make_sine_stream(n: int, rng: RngState, low: float = 0.0, high: float = 2.0) -> RegressionStream:
    """Draw ``n`` points from ``U[low, high]``, sort them, and pair them with the sine."""
    if n < 2:
        raise InvalidInputError(f"A stream needs at least 2 samples, got {n}")
    xs = np.sort(rng.uniform(low, high, size=n))
    return RegressionStream(xs=xs, ys=sine_target(xs))


def evaluation_inputs(n: int = 1000, low: float = 0.0, high: float = 2.0) -> np.ndarray:
    return np.linspace(low, high, n)


def mean_squared_error(net: Network, xs: np.ndarray, ys: np.ndarray) -> float:
    predictions = predict(net, xs[:, None])[:, 0]
    return float(np.mean((predictions - ys) ** 2))


def squared_error_step(net: Network, state: OptimizerState, x: float, y: float) -> float:
    """One optimizer update on ``(f(x) - y)^2``; returns the loss before the update."""
    output, cache = forward(net, np.array([x]))
    residual = output - y
    optimizer_step(state, net, backward(net, cache, 2.0 * residual))
    return float(residual[0] ** 2)


@dataclass
class NtkSnapshot:
    step: int
    curve: NtkCurve
    prediction: np.ndarray


@dataclass
class RegressionReport(HarnessReport):
    test_mse: float = float("nan")
    initial_mse: float = float("nan")
    mse_curve: List[float] = field(default_factory=list)
    ntk_snapshots: List[NtkSnapshot] = field(default_factory=list)
    test_x: Optional[np.ndarray] = field(default=None, repr=False)
    prediction: Optional[np.ndarray] = field(default=None, repr=False)

    def metrics(self) -> Dict[str, float]:
        return {
            "test_mse": self.test_mse,
            "initial_mse": self.initial_mse,
            "steps": len(self.mse_curve),
        }

    def write_artifacts(self, run_dir: Path) -> Dict[str, str]:
        files = {}
        curve = pd.DataFrame({"step": np.arange(1, len(self.mse_curve) + 1), "mse": self.mse_curve})
        files["mse_curve"] = str(write_table(run_dir / artifact_name("mse", self.config_hash), curve))
        if self.prediction is not None:
            files["prediction"] = str(write_curve(run_dir / artifact_name("prediction", self.config_hash),
                                                  self.test_x, self.prediction))
        for snapshot in self.ntk_snapshots:
            name = artifact_name("ntk", self.config_hash, snapshot.step)
            files[f"ntk_step{snapshot.step}"] = str(write_ntk_curve(run_dir / name, snapshot.curve))
            name = artifact_name("function", self.config_hash, snapshot.step)
            files[f"function_step{snapshot.step}"] = str(
                write_curve(run_dir / name, snapshot.curve.xs, snapshot.prediction))
        return files


def _regression_network(config: ExperimentConfig, rng: RngState) -> Network:
    # a/h frozen and no layer norm unless the config asks otherwise
    return network_from_config(config, 1, 1, rng, pre_layer_norm_default=False, learnable_default=False)


def run_streaming_regression(config: ExperimentConfig, seed: int, show_progress: bool = False) -> RegressionReport:
    """Single pass over a sine stream with several updates per sample.

    Divergence (test MSE above ``regression.divergence_mse`` or a non-finite
    gradient) stops the run and marks the report aborted.
    """
    section = config.regression
    rngs = make_rngs(seed, ["init", "data"])
    net = _regression_network(config, rngs["init"])
    state = OptimizerState.from_config(config.optimizer)
    stream = make_sine_stream(int(section["n_samples"]), rngs["data"], section["x_low"], section["x_high"])
    xs = evaluation_inputs(int(section["n_test"]), section["x_low"], section["x_high"])
    ys = sine_target(xs)
    snapshot_steps = set(int(s) for s in section["ntk_snapshot_steps"])

    report = RegressionReport(seed=seed, config_hash=config.config_hash, network=net, test_x=xs)
    report.initial_mse = report.test_mse = mean_squared_error(net, xs, ys)
    logger.info(f"Streaming regression {config.config_hash} seed {seed}: "
                f"{len(stream)} samples, initial MSE {report.initial_mse:.6g}")

    for step, (x, y) in enumerate(progress(stream, show_progress, "stream", len(stream)), start=1):
        try:
            for _ in range(int(section["updates_per_sample"])):
                squared_error_step(net, state, x, y)
        except NonFiniteGradientError as e:
            report.abort(str(e))
            break
        mse = mean_squared_error(net, xs, ys)
        report.mse_curve.append(mse)
        report.test_mse = mse
        logger.debug(f"step {step}: x={x:.4f} mse={mse:.6g}")
        if not np.isfinite(mse) or mse > section["divergence_mse"]:
            report.abort(f"test MSE {mse:.6g} exceeded {section['divergence_mse']:g} at step {step}")
            break
        if step in snapshot_steps:
            try:
                curve = normalized_ntk_curve(net, [x], xs)
            except DegenerateNetworkError as e:
                logger.warning(f"Skipping NTK snapshot at step {step}: {e}")
            else:
                report.ntk_snapshots.append(NtkSnapshot(step, curve, predict(net, xs[:, None])[:, 0]))

    report.prediction = predict(net, xs[:, None])[:, 0]
    if report.aborted:
        logger.warning(f"Run {config.config_hash} seed {seed} aborted: {report.abort_reason}")
    else:
        logger.info(f"Run {config.config_hash} seed {seed} finished: test MSE {report.test_mse:.6g}")
    return report


@dataclass
class EditReport(HarnessReport):
    edit_x: float = 1.5
    edit_y: float = -1.5
    converged: bool = False
    updates: int = 0
    target_error: float = float("nan")
    spill: float = float("nan")
    pretrain_mse: float = float("nan")
    pretrain_reached: bool = False
    test_x: Optional[np.ndarray] = field(default=None, repr=False)
    before: Optional[np.ndarray] = field(default=None, repr=False)
    after: Optional[np.ndarray] = field(default=None, repr=False)

    def metrics(self) -> Dict[str, float]:
        return {
            "spill": self.spill,
            "target_error": self.target_error,
            "converged": self.converged,
            "updates": self.updates,
            "pretrain_mse": self.pretrain_mse,
            "pretrain_reached": self.pretrain_reached,
        }

    def write_artifacts(self, run_dir: Path) -> Dict[str, str]:
        if self.test_x is None:
            return {}
        frame = pd.DataFrame({"x": self.test_x, "before": self.before, "after": self.after})
        return {"edit_curves": str(write_table(run_dir / artifact_name("edit", self.config_hash), frame))}


def pretrain(net: Network, state: OptimizerState, stream: RegressionStream, rng: RngState,
             epochs: int, threshold: float, xs: np.ndarray, ys: np.ndarray) -> Tuple[float, bool]:
    """Shuffled passes over ``stream`` until the test MSE drops below ``threshold``."""
    mse = mean_squared_error(net, xs, ys)
    for epoch in range(epochs):
        if mse < threshold:
            break
        for index in rng.permutation(len(stream)):
            squared_error_step(net, state, float(stream.xs[index]), float(stream.ys[index]))
        mse = mean_squared_error(net, xs, ys)
        logger.debug(f"pretrain epoch {epoch + 1}: mse={mse:.6g}")
    return mse, mse < threshold


def run_point_edit(config: ExperimentConfig, seed: int, edit_x: Optional[float] = None,
                   edit_y: Optional[float] = None) -> EditReport:
    """Pretrain on the sine stream, then update only on ``(edit_x, edit_y)``.

    Spill is the largest change of the learned function over test inputs
    farther than ``edit.spill_window`` from ``edit_x``.
    """
    section = config.edit
    edit_x = float(section["x"] if edit_x is None else edit_x)
    edit_y = float(section["y"] if edit_y is None else edit_y)
    regression = config.regression
    rngs = make_rngs(seed, ["init", "data", "shuffle"])
    net = _regression_network(config, rngs["init"])
    state = OptimizerState.from_config(config.optimizer)
    stream = make_sine_stream(int(regression["n_samples"]), rngs["data"], regression["x_low"], regression["x_high"])
    xs = evaluation_inputs(int(regression["n_test"]), regression["x_low"], regression["x_high"])
    ys = sine_target(xs)

    report = EditReport(seed=seed, config_hash=config.config_hash, network=net, edit_x=edit_x,
                        edit_y=edit_y, test_x=xs)
    try:
        report.pretrain_mse, report.pretrain_reached = pretrain(
            net, state, stream, rngs["shuffle"], int(section["pretrain_epochs"]),
            float(section["pretrain_threshold"]), xs, ys)
    except NonFiniteGradientError as e:
        report.abort(str(e))
        return report
    if not report.pretrain_reached:
        logger.warning(f"Pretraining reached MSE {report.pretrain_mse:.6g}, "
                       f"above the threshold {section['pretrain_threshold']}")

    report.before = predict(net, xs[:, None])[:, 0]
    error = abs(float(predict(net, np.array([edit_x]))[0]) - edit_y)
    try:
        while error >= section["tolerance"] and report.updates < int(section["max_updates"]):
            squared_error_step(net, state, edit_x, edit_y)
            report.updates += 1
            error = abs(float(predict(net, np.array([edit_x]))[0]) - edit_y)
    except NonFiniteGradientError as e:
        report.abort(str(e))
    report.after = predict(net, xs[:, None])[:, 0]
    report.target_error = error
    report.converged = error < section["tolerance"]

    outside = np.abs(xs - edit_x) > section["spill_window"]
    change = np.abs(report.after - report.before)
    report.spill = float(np.max(change[outside])) if np.any(outside) else 0.0
    logger.info(f"Point edit {config.config_hash} seed {seed}: {report.updates} updates, "
                f"error {error:.4g}, spill {report.spill:.4g}")
    return report
