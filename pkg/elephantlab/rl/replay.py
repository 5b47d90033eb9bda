"""FIFO replay buffer with uniform sampling."""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..common.errors import BufferNotReady, ShapeError, ValidationError
from ..core.rng import RngState


@dataclass(frozen=True)
class Transition:
    """One environment step.

    ``done`` marks a true terminal state (no bootstrapping). Episodes cut by
    the step cap are stored with ``done=False``.
    """

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


class ReplayBuffer:
    """Ring storage holding at most ``capacity`` transitions; the oldest is evicted first."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValidationError(f"Replay capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.states = np.zeros((self.capacity, self.obs_dim))
        self.next_states = np.zeros((self.capacity, self.obs_dim))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity, dtype=bool)
        self._next = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=np.float64)
        if state.shape != (self.obs_dim,):
            raise ShapeError(f"Transition state has shape {state.shape}, expected ({self.obs_dim},)")
        i = self._next
        self.states[i] = state
        self.next_states[i] = t.next_state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.dones[i] = t.done
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _ordered_slots(self) -> np.ndarray:
        start = self._next if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def _gather(self, slots: np.ndarray) -> TransitionBatch:
        return TransitionBatch(self.states[slots].copy(), self.actions[slots].copy(), self.rewards[slots].copy(),
                               self.next_states[slots].copy(), self.dones[slots].copy())

    def sample(self, batch: int, rng: RngState) -> TransitionBatch:
        """Uniform sample with replacement.

        Raises:
            BufferNotReady: If fewer than ``batch`` transitions are stored
        """
        if self.size < batch:
            raise BufferNotReady(f"Replay holds {self.size} transitions, {batch} requested")
        return self._gather(rng.integers(0, self.size, size=batch))

    def sample_distinct(self, k: int, rng: RngState) -> List[Transition]:
        """``k`` different stored transitions, for diagnostics."""
        if self.size < k:
            raise BufferNotReady(f"Replay holds {self.size} transitions, {k} distinct requested")
        return self.transitions(rng.choice(self.size, size=k, replace=False))

    def transitions(self, slots: Optional[np.ndarray] = None) -> List[Transition]:
        """Stored transitions, oldest first when ``slots`` is omitted."""
        slots = self._ordered_slots() if slots is None else np.asarray(slots)
        return [Transition(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                           self.next_states[i].copy(), bool(self.dones[i])) for i in slots]


def replay_push(buf: ReplayBuffer, t: Transition) -> None:
    buf.push(t)


def replay_sample(buf: ReplayBuffer, batch: int, rng: RngState) -> List[Transition]:
    """Uniform sample with replacement as a list of transitions."""
    if buf.size < batch:
        raise BufferNotReady(f"Replay holds {buf.size} transitions, {batch} requested")
    return buf.transitions(rng.integers(0, buf.size, size=batch))
