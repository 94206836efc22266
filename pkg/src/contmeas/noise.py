"""Seeded Wiener-increment streams.

Every stream is derived from ``(master seed, index)`` through
:class:`numpy.random.SeedSequence`, so trajectory ``i`` of an ensemble sees the
same noise no matter how the ensemble is scheduled.  A stream owns two
independent channels: Gaussian draws (Wiener increments, outcome smearing)
and uniform draws (inverse-CDF sampling).  Drawing a block of ``n`` values
yields exactly the next ``n`` single draws.
"""

from __future__ import annotations

import math

import numpy as np


class NoiseStream:
    """Increments d xi with mean 0 and variance gamma*dt/2."""

    def __init__(self, seed: int, index: int = 0, gamma: float = 1.0, dt: float = 1.0):
        if gamma < 0:
            raise ValueError("gamma must be non-negative")
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.seed = int(seed)
        self.index = int(index)
        self.gamma = float(gamma)
        self.dt = float(dt)
        normal_seq, uniform_seq = np.random.SeedSequence(self.seed, spawn_key=(self.index,)).spawn(2)
        self._normal = np.random.Generator(np.random.PCG64(normal_seq))
        self._uniform = np.random.Generator(np.random.PCG64(uniform_seq))
        self.position = 0  # increments handed out so far

    @property
    def scale(self) -> float:
        return math.sqrt(0.5 * self.gamma * self.dt)

    def next_increment(self) -> float:
        self.position += 1
        return self.scale * float(self._normal.standard_normal())

    def increments(self, n: int) -> np.ndarray:
        self.position += n
        return self.scale * self._normal.standard_normal(n)

    def normal(self, n: int | None = None):
        if n is None:
            return float(self._normal.standard_normal())
        return self._normal.standard_normal(n)

    def uniform(self, n: int | None = None):
        if n is None:
            return float(self._uniform.random())
        return self._uniform.random(n)


def stream_family(seed: int, indices, gamma: float = 1.0, dt: float = 1.0) -> list[NoiseStream]:
    return [NoiseStream(seed, i, gamma, dt) for i in indices]
