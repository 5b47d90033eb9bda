"""Classic-control environments implemented natively.

MountainCar and Acrobot follow the Gymnasium ``MountainCar-v0`` and
``Acrobot-v1`` dynamics (Acrobot uses the "book" equations and a single RK4
step per action). ``chain`` is a two-state deterministic loop used to check
value estimates against a known fixed point.

States are values: :func:`env_step` returns a new :class:`EnvState` and never
mutates its argument.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from ..common.errors import UsageError, ValidationError
from ..core.rng import RngState


class EnvKind(str, Enum):
    MOUNTAIN_CAR = "mountain_car"
    ACROBOT = "acrobot"
    CHAIN = "chain"


@dataclass(frozen=True)
class EnvState:
    kind: EnvKind
    physics: Tuple[float, ...]
    step_count: int = 0
    terminated: bool = False
    truncated: bool = False

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated

    @property
    def observation(self) -> np.ndarray:
        return ENVIRONMENTS[self.kind].observe(np.asarray(self.physics, dtype=np.float64))


class MountainCar:
    n_actions = 3
    obs_dim = 2
    episode_cap = 200
    default_budget = 100_000

    min_position = -1.2
    max_position = 0.6
    max_speed = 0.07
    goal_position = 0.5
    force = 0.001
    gravity = 0.0025

    def reset(self, rng: RngState) -> np.ndarray:
        return np.array([rng.uniform(-0.6, -0.4), 0.0])

    def dynamics(self, physics: np.ndarray, action: int) -> Tuple[np.ndarray, float, bool]:
        position, velocity = physics
        velocity += (action - 1) * self.force + np.cos(3 * position) * (-self.gravity)
        velocity = float(np.clip(velocity, -self.max_speed, self.max_speed))
        position += velocity
        position = float(np.clip(position, self.min_position, self.max_position))
        if position == self.min_position and velocity < 0:
            velocity = 0.0
        terminated = bool(position >= self.goal_position and velocity >= 0)
        return np.array([position, velocity]), -1.0, terminated

    def observe(self, physics: np.ndarray) -> np.ndarray:
        return physics.copy()


def _wrap(x: float, low: float, high: float) -> float:
    span = high - low
    while x > high:
        x -= span
    while x < low:
        x += span
    return x


class Acrobot:
    n_actions = 3
    obs_dim = 6
    episode_cap = 500
    default_budget = 50_000

    dt = 0.2
    link_length_1 = 1.0
    link_mass_1 = 1.0
    link_mass_2 = 1.0
    link_com_pos_1 = 0.5
    link_com_pos_2 = 0.5
    link_moi = 1.0
    max_vel_1 = 4 * np.pi
    max_vel_2 = 9 * np.pi
    torques = (-1.0, 0.0, 1.0)
    g = 9.8

    def reset(self, rng: RngState) -> np.ndarray:
        return rng.uniform(-0.1, 0.1, size=4)

    def _dsdt(self, s: np.ndarray) -> np.ndarray:
        m1, m2 = self.link_mass_1, self.link_mass_2
        l1 = self.link_length_1
        lc1, lc2 = self.link_com_pos_1, self.link_com_pos_2
        I1 = I2 = self.link_moi
        g = self.g
        theta1, theta2, dtheta1, dtheta2, torque = s
        d1 = m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * np.cos(theta2)) + I1 + I2
        d2 = m2 * (lc2 ** 2 + l1 * lc2 * np.cos(theta2)) + I2
        phi2 = m2 * lc2 * g * np.cos(theta1 + theta2 - np.pi / 2.0)
        phi1 = (-m2 * l1 * lc2 * dtheta2 ** 2 * np.sin(theta2)
                - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * np.sin(theta2)
                + (m1 * lc1 + m2 * l1) * g * np.cos(theta1 - np.pi / 2)
                + phi2)
        ddtheta2 = ((torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 ** 2 * np.sin(theta2) - phi2)
                    / (m2 * lc2 ** 2 + I2 - d2 ** 2 / d1))
        ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
        return np.array([dtheta1, dtheta2, ddtheta1, ddtheta2, 0.0])

    def _rk4(self, y0: np.ndarray) -> np.ndarray:
        half = self.dt / 2.0
        k1 = self._dsdt(y0)
        k2 = self._dsdt(y0 + half * k1)
        k3 = self._dsdt(y0 + half * k2)
        k4 = self._dsdt(y0 + self.dt * k3)
        return (y0 + self.dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))[:4]

    def dynamics(self, physics: np.ndarray, action: int) -> Tuple[np.ndarray, float, bool]:
        ns = self._rk4(np.append(physics, self.torques[action]))
        ns[0] = _wrap(ns[0], -np.pi, np.pi)
        ns[1] = _wrap(ns[1], -np.pi, np.pi)
        ns[2] = np.clip(ns[2], -self.max_vel_1, self.max_vel_1)
        ns[3] = np.clip(ns[3], -self.max_vel_2, self.max_vel_2)
        terminated = bool(-np.cos(ns[0]) - np.cos(ns[1] + ns[0]) > 1.0)
        return ns, (0.0 if terminated else -1.0), terminated

    def observe(self, physics: np.ndarray) -> np.ndarray:
        theta1, theta2, dtheta1, dtheta2 = physics
        return np.array([np.cos(theta1), np.sin(theta1), np.cos(theta2), np.sin(theta2), dtheta1, dtheta2])


class Chain:
    """Two states visited alternately with reward 1 per step and no terminal state."""

    n_actions = 1
    obs_dim = 2
    episode_cap = 50
    default_budget = 5_000
    reward = 1.0

    def reset(self, rng: RngState) -> np.ndarray:
        return np.array([0.0])

    def dynamics(self, physics: np.ndarray, action: int) -> Tuple[np.ndarray, float, bool]:
        return np.array([1.0 - physics[0]]), self.reward, False

    def observe(self, physics: np.ndarray) -> np.ndarray:
        return np.eye(2)[int(physics[0])]


ENVIRONMENTS: Dict[EnvKind, object] = {
    EnvKind.MOUNTAIN_CAR: MountainCar(),
    EnvKind.ACROBOT: Acrobot(),
    EnvKind.CHAIN: Chain(),
}


def environment(kind) -> object:
    try:
        return ENVIRONMENTS[EnvKind(kind)]
    except ValueError:
        raise ValidationError(f"Unknown environment '{kind}'; expected one of "
                              f"{', '.join(k.value for k in EnvKind)}")


def env_reset(kind, rng: RngState) -> EnvState:
    env = environment(kind)
    return EnvState(kind=EnvKind(kind), physics=tuple(float(v) for v in env.reset(rng)))


def env_step(kind, state: EnvState, action: int) -> Tuple[EnvState, float, bool]:
    """Advance one step. ``done`` is true on termination or when the episode cap is hit.

    Raises:
        UsageError: If ``state`` is already done or ``action`` is not valid
    """
    env = environment(kind)
    if state.done:
        raise UsageError("Cannot step an environment whose episode has ended; reset it first")
    if not 0 <= int(action) < env.n_actions:
        raise UsageError(f"Action {action} is not in [0, {env.n_actions})")
    physics, reward, terminated = env.dynamics(np.asarray(state.physics, dtype=np.float64), int(action))
    step_count = state.step_count + 1
    truncated = not terminated and step_count >= env.episode_cap
    next_state = replace(state, physics=tuple(float(v) for v in physics), step_count=step_count,
                         terminated=terminated, truncated=truncated)
    return next_state, float(reward), next_state.done
