"""DQN with a target network, epsilon-greedy acting and a bounded replay buffer.

One gradient update per environment step on the mean squared TD error of a
uniformly sampled mini-batch. The target network is a copy of the online
network refreshed every ``target_sync`` steps.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from ..common.errors import DiagnosticsError, NonFiniteGradientError, ValidationError
from ..common.logging import logger
from ..core.rng import RngState, make_rngs
from ..diagnostics.export import artifact_name, write_matrix, write_table
from ..diagnostics.kernels import KernelMatrix, LossKind, gradient_covariance
from ..experiments.base import HarnessReport, progress
from ..nn.network import Network, backward, forward, predict
from ..nn.optim import OptimizerState, optimizer_step
from ..runner.experiment_config import ExperimentConfig, network_from_config
from .envs import EnvKind, env_reset, env_step, environment
from .replay import ReplayBuffer, Transition, TransitionBatch

DQN_LR_GRID = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6]
BUFFER_SIZES = [32, 100, 300, 1000, 3000, 10000]

RNG_STREAMS = ["init", "env", "policy", "replay", "eval", "diagnostics"]


@dataclass
class DqnSettings:
    env: EnvKind = EnvKind.MOUNTAIN_CAR
    total_steps: int = 100_000
    buffer_size: int = 10_000
    batch_size: int = 32
    gamma: float = 0.99
    target_sync: int = 200
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_fraction: float = 0.1
    warmup: int = 1000
    updates_per_step: int = 1
    eval_episodes: int = 10
    final_fraction: float = 0.1
    divergence_q: float = 1e6
    covariance_steps: List[int] = field(default_factory=list)
    covariance_samples: int = 32

    @classmethod
    def from_config(cls, section: Dict[str, Any]) -> "DqnSettings":
        model = environment(section["env"])
        env = EnvKind(section["env"])
        total = section["total_steps"]
        if total is None:
            total = model.default_budget
        elif total < 1:
            raise ValidationError(f"'dqn.total_steps' must be positive, got {total}")
        covariance = section["covariance_steps"]
        if covariance is None:
            covariance = [total // 2, total]
        settings = cls(
            env=env,
            total_steps=int(total),
            buffer_size=int(section["buffer_size"]),
            batch_size=int(section["batch_size"]),
            gamma=float(section["gamma"]),
            target_sync=int(section["target_sync"]),
            epsilon_start=float(section["epsilon_start"]),
            epsilon_end=float(section["epsilon_end"]),
            epsilon_fraction=float(section["epsilon_fraction"]),
            warmup=int(section["warmup"]),
            updates_per_step=int(section["updates_per_step"]),
            eval_episodes=int(section["eval_episodes"]),
            final_fraction=float(section["final_fraction"]),
            divergence_q=float(section["divergence_q"]),
            covariance_steps=[int(s) for s in covariance],
            covariance_samples=int(section["covariance_samples"]),
        )
        if not 0 <= settings.gamma <= 1:
            raise ValidationError(f"'dqn.gamma' must lie in [0, 1], got {settings.gamma}")
        if settings.target_sync < 1 or settings.batch_size < 1:
            raise ValidationError("'dqn.target_sync' and 'dqn.batch_size' must be positive")
        return settings

    def epsilon(self, step: int) -> float:
        """Linear decay over the first ``epsilon_fraction`` of training, then flat."""
        horizon = max(1.0, self.epsilon_fraction * self.total_steps)
        progress_fraction = min(1.0, step / horizon)
        return self.epsilon_start + progress_fraction * (self.epsilon_end - self.epsilon_start)


def greedy_action(net: Network, observation: np.ndarray) -> int:
    return int(np.argmax(predict(net, observation)))


def td_targets(target: Network, batch: TransitionBatch, gamma: float) -> np.ndarray:
    """``r + gamma * max_a' Q_target(s', a')``, without the bootstrap term at terminal states."""
    next_q = predict(target, batch.next_states).max(axis=1)
    return batch.rewards + gamma * (~batch.dones) * next_q


def td_update(net: Network, target: Network, state: OptimizerState, batch: TransitionBatch,
              gamma: float) -> Tuple[float, float]:
    """One step on the mean squared TD error; returns ``(loss, max |Q|)`` before the step."""
    q, cache = forward(net, batch.states)
    rows = np.arange(len(batch))
    td = q[rows, batch.actions] - td_targets(target, batch, gamma)
    d_q = np.zeros_like(q)
    d_q[rows, batch.actions] = 2.0 * td / len(batch)
    optimizer_step(state, net, backward(net, cache, d_q))
    return float(np.mean(td ** 2)), float(np.max(np.abs(q)))


@dataclass
class PolicyEvaluation:
    mean_return: float
    returns: List[float]


def evaluate_policy(net: Network, env_kind, episodes: int, rng: RngState) -> PolicyEvaluation:
    """Greedy rollouts; every episode ends by termination or the step cap."""
    if episodes < 1:
        raise ValidationError(f"Evaluation needs at least one episode, got {episodes}")
    returns = []
    for _ in range(episodes):
        state = env_reset(env_kind, rng)
        total, done = 0.0, False
        while not done:
            state, reward, done = env_step(env_kind, state, greedy_action(net, state.observation))
            total += reward
        returns.append(total)
    return PolicyEvaluation(float(np.mean(returns)), returns)


@dataclass
class CovarianceSnapshot:
    step: int
    matrix: KernelMatrix


@dataclass
class DqnReport(HarnessReport):
    env: str = ""
    final_return: float = float("nan")
    eval_return: float = float("nan")
    eval_returns: List[float] = field(default_factory=list)
    episode_returns: List[float] = field(default_factory=list)
    episode_log: List[Dict[str, float]] = field(default_factory=list)
    covariance: List[CovarianceSnapshot] = field(default_factory=list)
    steps: int = 0
    max_abs_q: float = 0.0

    def metrics(self) -> Dict[str, Any]:
        metrics = {
            "final_return": self.final_return,
            "eval_return": self.eval_return,
            "episodes": len(self.episode_returns),
            "steps": self.steps,
            "max_abs_q": self.max_abs_q,
        }
        if self.covariance:
            metrics["covariance_mean_abs_offdiag"] = self.covariance[-1].matrix.mean_abs_offdiag()
        return metrics

    def write_artifacts(self, run_dir: Path) -> Dict[str, str]:
        files = {}
        columns = ["step", "episode", "return", "epsilon", "loss", "lr"]
        frame = pd.DataFrame(self.episode_log, columns=columns)
        files["training"] = str(write_table(run_dir / artifact_name("training", self.config_hash), frame))
        for snapshot in self.covariance:
            name = artifact_name("covariance", self.config_hash, snapshot.step)
            files[f"covariance_step{snapshot.step}"] = str(write_matrix(run_dir / name, snapshot.matrix))
        return files


def final_return(episode_returns: List[float], fraction: float) -> float:
    """Mean return of the last ``fraction`` of episodes (at least one)."""
    if not episode_returns:
        return float("nan")
    count = max(1, math.ceil(fraction * len(episode_returns)))
    return float(np.mean(episode_returns[-count:]))


def run_dqn(net: Network, settings: DqnSettings, optimizer: OptimizerState, seed: int,
            config_hash: str = "", show_progress: bool = False) -> DqnReport:
    """Train ``net`` in place with DQN and return the report."""
    rngs = make_rngs(seed, RNG_STREAMS)
    env = environment(settings.env)
    target = net.copy()
    buffer = ReplayBuffer(settings.buffer_size, env.obs_dim)
    report = DqnReport(seed=seed, config_hash=config_hash, network=net, env=settings.env.value)
    covariance_steps = set(settings.covariance_steps)

    state = env_reset(settings.env, rngs["env"])
    episode_return, last_loss = 0.0, float("nan")
    for step in progress(range(1, settings.total_steps + 1), show_progress, settings.env.value,
                         settings.total_steps):
        observation = state.observation
        epsilon = settings.epsilon(step)
        if rngs["policy"].random() < epsilon:
            action = int(rngs["policy"].integers(0, env.n_actions))
        else:
            action = greedy_action(net, observation)
        next_state, reward, done = env_step(settings.env, state, action)
        buffer.push(Transition(observation, action, reward, next_state.observation, next_state.terminated))
        episode_return += reward
        report.steps = step

        if step > settings.warmup and len(buffer) >= settings.batch_size:
            try:
                for _ in range(settings.updates_per_step):
                    batch = buffer.sample(settings.batch_size, rngs["replay"])
                    last_loss, max_q = td_update(net, target, optimizer, batch, settings.gamma)
                    report.max_abs_q = max(report.max_abs_q, max_q)
            except NonFiniteGradientError as e:
                report.abort(str(e))
                break
            if not np.isfinite(last_loss) or report.max_abs_q > settings.divergence_q:
                report.abort(f"|Q| reached {report.max_abs_q:.6g} at step {step}")
                break

        if step % settings.target_sync == 0:
            target.load_parameters_from(net)

        if step in covariance_steps and len(buffer) >= 2:
            samples = buffer.sample_distinct(min(settings.covariance_samples, len(buffer)), rngs["diagnostics"])
            try:
                matrix = gradient_covariance(net, LossKind.TD_ERROR, samples, target_net=target,
                                             gamma=settings.gamma)
            except DiagnosticsError as e:
                logger.warning(f"No covariance snapshot at step {step}: {e}")
            else:
                report.covariance.append(CovarianceSnapshot(step, matrix))

        if done:
            report.episode_returns.append(episode_return)
            report.episode_log.append({"step": step, "episode": len(report.episode_returns),
                                       "return": episode_return, "epsilon": epsilon, "loss": last_loss,
                                       "lr": optimizer.learning_rate})
            logger.debug(f"step {step}: episode {len(report.episode_returns)} return {episode_return:g}")
            state = env_reset(settings.env, rngs["env"])
            episode_return = 0.0
        else:
            state = next_state

    report.final_return = final_return(report.episode_returns, settings.final_fraction)
    if settings.eval_episodes > 0 and not report.aborted:
        evaluation = evaluate_policy(net, settings.env, settings.eval_episodes, rngs["eval"])
        report.eval_return, report.eval_returns = evaluation.mean_return, evaluation.returns
    return report


def dqn_train(config: ExperimentConfig, seed: int, show_progress: bool = False) -> DqnReport:
    """Build the network and optimizer described by ``config`` and train with DQN."""
    settings = DqnSettings.from_config(config.dqn)
    env = environment(settings.env)
    net = network_from_config(config, env.obs_dim, env.n_actions, make_rngs(seed, RNG_STREAMS)["init"])
    optimizer = OptimizerState.from_config(config.optimizer)
    logger.info(f"DQN {config.config_hash} seed {seed}: {settings.env.value}, {settings.total_steps} steps, "
                f"buffer {settings.buffer_size}, {net.parameter_count()} parameters")
    report = run_dqn(net, settings, optimizer, seed, config.config_hash, show_progress)
    if report.aborted:
        logger.warning(f"Run {config.config_hash} seed {seed} aborted: {report.abort_reason}")
    else:
        logger.info(f"Run {config.config_hash} seed {seed} finished: final return {report.final_return:.2f}, "
                    f"greedy return {report.eval_return:.2f}")
    return report
