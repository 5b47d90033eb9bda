"""Tests for the classic-control environments."""

import numpy as np
import pytest

from elephantlab.common.errors import UsageError, ValidationError
from elephantlab.rl.envs import EnvKind, EnvState, env_reset, env_step, environment


def run_episode(kind, rng, policy):
    state = env_reset(kind, rng)
    total, done = 0.0, False
    while not done:
        state, reward, done = env_step(kind, state, policy(state))
        total += reward
    return state, total


class TestMountainCar:

    def test_push_right_from_valley(self):
        state = EnvState(EnvKind.MOUNTAIN_CAR, (-0.5, 0.0))
        next_state, reward, done = env_step("mountain_car", state, 2)
        velocity = 0.001 - 0.0025 * np.cos(3 * -0.5)
        assert next_state.physics == pytest.approx((-0.5 + velocity, velocity), abs=1e-15)
        assert reward == -1.0
        assert not done
        assert next_state.step_count == 1

    def test_state_is_not_mutated(self):
        state = EnvState(EnvKind.MOUNTAIN_CAR, (-0.5, 0.0))
        env_step("mountain_car", state, 0)
        assert state.physics == (-0.5, 0.0)
        assert state.step_count == 0

    def test_reset_range(self, rng):
        for _ in range(20):
            position, velocity = env_reset("mountain_car", rng).physics
            assert -0.6 <= position <= -0.4
            assert velocity == 0.0

    def test_reaching_goal_terminates(self):
        state = EnvState(EnvKind.MOUNTAIN_CAR, (0.49, 0.05))
        next_state, reward, done = env_step(EnvKind.MOUNTAIN_CAR, state, 2)
        assert done and next_state.terminated and not next_state.truncated
        assert reward == -1.0

    def test_left_wall_stops_the_car(self):
        state = EnvState(EnvKind.MOUNTAIN_CAR, (-1.19, -0.07))
        next_state, _, _ = env_step("mountain_car", state, 0)
        assert next_state.physics == (-1.2, 0.0)

    def test_idle_episode_hits_cap(self, rng):
        state, total = run_episode("mountain_car", rng, lambda s: 1)
        assert state.truncated and not state.terminated
        assert state.step_count == 200
        assert total == -200.0

    def test_random_returns_in_range(self, rng):
        _, total = run_episode("mountain_car", rng, lambda s: int(rng.integers(0, 3)))
        assert -200.0 <= total <= -1.0


class TestAcrobot:

    def test_observation(self, rng):
        state = env_reset("acrobot", rng)
        obs = state.observation
        assert obs.shape == (6,)
        np.testing.assert_allclose(obs[0] ** 2 + obs[1] ** 2, 1.0)
        np.testing.assert_allclose(obs[2] ** 2 + obs[3] ** 2, 1.0)

    def test_hanging_at_rest_stays_put(self):
        state = EnvState(EnvKind.ACROBOT, (0.0, 0.0, 0.0, 0.0))
        next_state, reward, done = env_step("acrobot", state, 1)
        np.testing.assert_allclose(next_state.physics, 0.0, atol=1e-12)
        assert reward == -1.0 and not done

    def test_episode_bounds(self, rng):
        state, total = run_episode("acrobot", rng, lambda s: int(rng.integers(0, 3)))
        assert state.step_count <= 500
        assert -500.0 <= total <= 0.0
        assert abs(state.physics[2]) <= 4 * np.pi
        assert abs(state.physics[3]) <= 9 * np.pi
        if state.truncated:
            assert state.step_count == 500


class TestChain:

    def test_alternates_with_unit_reward(self, rng):
        state = env_reset("chain", rng)
        observations = [state.observation]
        for _ in range(3):
            state, reward, _ = env_step("chain", state, 0)
            assert reward == 1.0
            observations.append(state.observation)
        np.testing.assert_array_equal(observations, [[1, 0], [0, 1], [1, 0], [0, 1]])

    def test_cap(self, rng):
        state, total = run_episode("chain", rng, lambda s: 0)
        assert state.truncated and state.step_count == 50
        assert total == 50.0


class TestErrors:

    def test_step_after_done(self):
        state = EnvState(EnvKind.CHAIN, (0.0,), step_count=50, truncated=True)
        with pytest.raises(UsageError):
            env_step("chain", state, 0)

    @pytest.mark.parametrize("action", [-1, 3])
    def test_invalid_action(self, action):
        with pytest.raises(UsageError):
            env_step("mountain_car", EnvState(EnvKind.MOUNTAIN_CAR, (-0.5, 0.0)), action)

    def test_unknown_environment(self, rng):
        with pytest.raises(ValidationError):
            environment("cartpole")
        with pytest.raises(ValidationError):
            env_reset("cartpole", rng)
