"""Explicit-state random number generation.

Every run owns its own :class:`RngState`; nothing in the package touches the
global numpy random state, so concurrent runs never interleave draws.
"""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

Shape = Union[int, Tuple[int, ...], None]


class RngState:
    """A seeded PCG64 generator.

    Identical seeds produce bit-identical draw sequences on every platform
    numpy supports.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2 ** 64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._seed_sequence = np.random.SeedSequence(self.seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seed_sequence))

    def uniform(self, low: float = 0.0, high: float = 1.0, size: Shape = None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size: Shape = None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low: int, high: Optional[int] = None, size: Shape = None):
        return self.generator.integers(low, high, size)

    def random(self, size: Shape = None):
        return self.generator.random(size)

    def choice(self, n: int, size: Shape = None, replace: bool = True):
        return self.generator.choice(n, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def spawn(self, n: int) -> List["RngState"]:
        """Derive ``n`` independent child generators.

        Children are a deterministic function of the parent seed and of how
        many children were spawned before, not of draws taken from the parent.
        """
        children = self._seed_sequence.spawn(n)
        return [RngState._from_sequence(child) for child in children]

    @classmethod
    def _from_sequence(cls, sequence: np.random.SeedSequence) -> "RngState":
        state = cls.__new__(cls)
        state.seed = int(sequence.generate_state(1, dtype=np.uint64)[0])
        state._seed_sequence = sequence
        state.generator = np.random.Generator(np.random.PCG64(sequence))
        return state

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed})"


def make_rngs(seed: int, names: Sequence[str]) -> dict:
    """Spawn one named child generator per purpose (init, data, policy, ...)."""
    children = RngState(seed).spawn(len(names))
    return dict(zip(names, children))
