"""Counter-based, splittable random streams.

Each run draws from a Philox generator keyed by ``(master_seed, run_index)``,
so streams are reproducible across platforms and independent between runs.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    def __init__(self, master_seed: int, run_index: int = 0, *spawn: int):
        self.master_seed = int(master_seed)
        self.key = (int(run_index),) + tuple(int(s) for s in spawn)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream (e.g. environment vs. learner)."""
        return RngStream(self.master_seed, *self.key, index)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def chi(self, df: float, size=None):
        return np.sqrt(2.0 * self.gen.standard_gamma(df / 2.0, size))

    def student_t(self, df: float, size=None):
        """Gaussian over sqrt(chi-square / df)."""
        z = self.gen.standard_normal(size)
        return z / (self.chi(df, size) / np.sqrt(df))

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def choice(self, n: int, p=None):
        return int(self.gen.choice(n, p=p))

    def unit_vectors(self, n: int, dim: int) -> np.ndarray:
        v = self.gen.standard_normal((n, dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)


def rng_stream(master_seed: int, run_index: int) -> RngStream:
    return RngStream(master_seed, run_index)
