"""Seeded random streams for reproducible replicates."""
from __future__ import annotations

import numpy as np


class ReplicateStream:
    """numpy Generator wrapper whose stream is a pure function of (base_seed, key).

    Streams come from ``SeedSequence(base_seed, spawn_key=key)``, so replicate
    ``i`` draws the same numbers no matter which worker runs it or in what order.
    """

    def __init__(self, base_seed: int, key: tuple = ()):
        self._base_seed = int(base_seed)
        self._key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(entropy=self._base_seed, spawn_key=self._key)
        self._rng = np.random.Generator(np.random.PCG64(seq))

    @classmethod
    def for_replicate(cls, base_seed: int, replicate_index: int) -> ReplicateStream:
        return cls(base_seed, (replicate_index,))

    @property
    def base_seed(self) -> int:
        return self._base_seed

    @property
    def key(self) -> tuple:
        return self._key

    @property
    def generator(self) -> np.random.Generator:
        return self._rng

    def random(self, size=None):
        return self._rng.random(size)

    def exponential(self, scale: float = 1.0, size=None):
        return self._rng.exponential(scale, size)

    def poisson(self, lam, size=None):
        return self._rng.poisson(lam, size)

    def binomial(self, n, p: float, size=None):
        return self._rng.binomial(n, p, size)

    def geometric(self, p: float, size=None):
        return self._rng.geometric(p, size)

    def negative_binomial(self, n, p: float, size=None):
        return self._rng.negative_binomial(n, p, size)

    def multinomial(self, n: int, pvals, size=None):
        return self._rng.multinomial(n, pvals, size)

    def integers(self, low: int, high=None, size=None):
        return self._rng.integers(low, high, size)
