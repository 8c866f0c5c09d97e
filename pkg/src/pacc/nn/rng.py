"""Seeded, counter-based random streams (Philox) for init, dropout and splits."""
from __future__ import annotations

import hashlib

import numpy as np


class RngStream:
    """A Philox generator keyed by a 64-bit seed.

    ``child(name)`` derives an independent stream whose key depends only on
    the parent seed and ``name``, so adding a consumer never shifts the draws
    seen by another.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & ((1 << 64) - 1)
        self.generator = np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, name: str) -> "RngStream":
        digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
        return RngStream(int.from_bytes(digest[:8], "little"))

    def uniform(self, low, high, size=None, dtype=np.float64):
        return self.generator.uniform(low, high, size).astype(dtype)

    def normal(self, size=None, dtype=np.float64):
        return self.generator.standard_normal(size).astype(dtype)

    def integers(self, high, size=None):
        return self.generator.integers(high, size=size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def random(self, size=None):
        return self.generator.random(size)
