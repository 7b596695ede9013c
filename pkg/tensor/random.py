"""
Seeded, splittable random streams.

Each stream is a Philox counter-based generator keyed by (seed, path). Child
streams derived with split() are independent of each other and of the order in
which they are created, so per-image or per-worker streams give the same draws
whether work runs sequentially or in parallel.
"""

from typing import Sequence, Tuple, Union

import numpy as np

from errors import ConfigurationError


Shape = Union[int, Tuple[int, ...]]


class RngStream:
    """Deterministic random stream identified by a seed and a key path."""

    ALGORITHM = "philox-4x64"

    def __init__(self, seed: int, key: Sequence[int] = ()):
        seed = int(seed)
        if seed < 0 or seed >= 2 ** 64:
            raise ConfigurationError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        sequence = np.random.SeedSequence(seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"

    def split(self, *index: int) -> "RngStream":
        """Child stream for `index`; independent of draws already made here."""
        return RngStream(self.seed, self.key + tuple(index))

    def normal(self, shape: Shape, scale: float = 1.0, dtype=np.float64) -> np.ndarray:
        return (self.generator.standard_normal(shape) * scale).astype(dtype, copy=False)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape: Shape = None) -> np.ndarray:
        return self.generator.uniform(low, high, shape)

    def integers(self, low: int, high: int, shape: Shape = None) -> np.ndarray:
        return self.generator.integers(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, options: Sequence, size: int, replace: bool = True) -> np.ndarray:
        return self.generator.choice(options, size=size, replace=replace)
