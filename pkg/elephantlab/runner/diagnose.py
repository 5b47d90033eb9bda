"""The ``diagnostics`` harness: kernel, covariance and sparsity diagnostics on a stored network.

The network comes from a checkpoint (``diagnostics.checkpoint`` or the
``--checkpoint`` option); without one a freshly initialized network is built
from the config, which is how initialization-time locality is inspected.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from ..common.errors import DegenerateNetworkError, DiagnosticsError, ValidationError
from ..common.logging import logger
from ..core.rng import RngState, make_rngs
from ..diagnostics.export import artifact_name, write_matrix, write_ntk_curve
from ..diagnostics.kernels import (KernelMatrix, LossKind, NtkCurve, gradient_covariance, normalized_ntk_curve,
                                   normalized_ntk_matrix, representation_sparsity)
from ..experiments.base import HarnessReport
from ..experiments.regression import sine_target
from ..nn.checkpoint import load_checkpoint
from ..nn.network import Network
from ..rl.envs import env_reset, env_step, environment
from ..rl.replay import ReplayBuffer, Transition
from .experiment_config import ExperimentConfig, network_from_config

LOCALITY_DISTANCE = 0.5
# transitions rolled out per requested TD covariance sample
ROLLOUT_FACTOR = 10


@dataclass
class DiagnosticsReport(HarnessReport):
    checkpoint: Optional[str] = None
    representation_sparsity: float = float("nan")
    curves: List[NtkCurve] = field(default_factory=list)
    matrix: Optional[KernelMatrix] = None
    loss_kind: Optional[str] = None
    covariance: Optional[KernelMatrix] = None

    def locality(self) -> float:
        """Largest ``|normalized NTK|`` farther than ``LOCALITY_DISTANCE`` from the anchor, over all curves."""
        values = []
        for curve in self.curves:
            far = np.abs(curve.xs[:, 0] - curve.x_t[0]) > LOCALITY_DISTANCE
            if np.any(far):
                values.append(np.max(np.abs(curve.normalized[far])))
        return float(max(values)) if values else float("nan")

    def metrics(self) -> Dict[str, float]:
        metrics = {"representation_sparsity": self.representation_sparsity}
        if self.curves:
            metrics["ntk_far_max_abs"] = self.locality()
        if self.matrix is not None:
            metrics["ntk_matrix_mean_abs_offdiag"] = self.matrix.mean_abs_offdiag()
        if self.covariance is not None:
            metrics["covariance_mean_abs_offdiag"] = self.covariance.mean_abs_offdiag()
        return metrics

    def write_artifacts(self, run_dir: Path) -> Dict[str, str]:
        files = {}
        for index, curve in enumerate(self.curves):
            name = artifact_name(f"ntk-anchor{index}", self.config_hash)
            files[f"ntk_anchor{index}"] = str(write_ntk_curve(run_dir / name, curve))
        if self.matrix is not None:
            name = artifact_name("ntk-matrix", self.config_hash)
            files["ntk_matrix"] = str(write_matrix(run_dir / name, self.matrix))
        if self.covariance is not None:
            name = artifact_name("covariance", self.config_hash)
            files["covariance"] = str(write_matrix(run_dir / name, self.covariance))
        return files


def run_diagnostics(config: ExperimentConfig, seed: int,
                    checkpoint: Optional[Union[str, Path]] = None) -> DiagnosticsReport:
    section = config.diagnostics
    checkpoint = checkpoint or section["checkpoint"]
    rngs = make_rngs(seed, ["init", "inputs", "covariance"])
    if checkpoint:
        net = load_checkpoint(checkpoint)
        logger.info(f"Diagnostics on checkpoint {checkpoint}")
    else:
        net = network_from_config(config, int(section["n_inputs"]), int(section["n_outputs"]), rngs["init"])
        logger.info("Diagnostics on a freshly initialized network")

    report = DiagnosticsReport(seed=seed, config_hash=config.config_hash, network=net,
                               checkpoint=str(checkpoint) if checkpoint else None)
    low, high = float(section["input_low"]), float(section["input_high"])
    inputs = rngs["inputs"].uniform(low, high, size=(int(section["sparsity_samples"]), net.n_inputs))
    if net.n_hidden_layers:
        report.representation_sparsity = representation_sparsity(net, inputs, float(section["sparsity_eps"]))

    include = bool(section["include_elephant_params"])
    if net.n_inputs == 1 and net.n_outputs == 1:
        grid = np.linspace(low, high, int(section["ntk_points"]))
        for anchor in section["ntk_anchors"]:
            try:
                report.curves.append(normalized_ntk_curve(net, [float(anchor)], grid, include))
            except DegenerateNetworkError as e:
                logger.warning(f"No NTK curve at anchor {anchor}: {e}")

    samples = inputs[: int(section["matrix_samples"])]
    try:
        report.matrix = normalized_ntk_matrix(net, samples, include)
    except DiagnosticsError as e:
        logger.warning(f"No NTK matrix: {e}")

    if section["loss_kind"] is not None:
        report.loss_kind = _loss_kind(section["loss_kind"])
        try:
            report.covariance = loss_covariance(net, section, report.loss_kind, inputs, rngs["covariance"])
        except DiagnosticsError as e:
            logger.warning(f"No gradient covariance: {e}")
    return report


def _loss_kind(value: str) -> str:
    try:
        return LossKind(value).value
    except ValueError:
        raise ValidationError(f"'diagnostics.loss_kind' must be one of "
                              f"{', '.join(k.value for k in LossKind)}, got {value!r}")


def rollout_transitions(net: Network, env_kind: str, count: int, rng: RngState) -> ReplayBuffer:
    """Roll ``count`` uniformly random actions through ``env_kind`` into a fresh buffer."""
    env = environment(env_kind)
    if net.n_inputs != env.obs_dim or net.n_outputs != env.n_actions:
        raise ValidationError(f"Network maps {net.n_inputs} -> {net.n_outputs} but {env_kind} needs "
                              f"{env.obs_dim} -> {env.n_actions}")
    buffer = ReplayBuffer(count, env.obs_dim)
    state = env_reset(env_kind, rng)
    for _ in range(count):
        action = int(rng.integers(0, env.n_actions))
        next_state, reward, done = env_step(env_kind, state, action)
        buffer.push(Transition(state.observation, action, reward, next_state.observation, next_state.terminated))
        state = env_reset(env_kind, rng) if done else next_state
    return buffer


def loss_covariance(net: Network, section: Dict, loss_kind: str, inputs: np.ndarray,
                    rng: RngState) -> KernelMatrix:
    """Cosine matrix of per-sample loss gradients of ``net`` under ``loss_kind``.

    Squared error pairs the sampled inputs with ``sin(pi x)`` of their first
    coordinate; cross entropy draws its labels uniformly. TD error uses
    transitions rolled out from ``diagnostics.covariance_env``, with the network
    as its own target.
    """
    k = int(section["covariance_samples"])
    if k < 2:
        raise ValidationError(f"'diagnostics.covariance_samples' must be at least 2, got {k}")
    if loss_kind == LossKind.TD_ERROR:
        buffer = rollout_transitions(net, section["covariance_env"], ROLLOUT_FACTOR * k, rng)
        samples = buffer.sample_distinct(k, rng)
        return gradient_covariance(net, loss_kind, samples, gamma=float(section["gamma"]))

    xs = inputs[:k]
    if loss_kind == LossKind.CROSS_ENTROPY:
        labels = rng.integers(0, net.n_outputs, size=len(xs))
        samples = list(zip(xs, labels))
    else:
        targets = np.repeat(sine_target(xs[:, :1]), net.n_outputs, axis=1)
        samples = list(zip(xs, targets))
    return gradient_covariance(net, loss_kind, samples)
