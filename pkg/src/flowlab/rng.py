"""Seeded, counter-based random streams.

Every random draw in flowlab goes through :func:`make_rng`, which builds a
Philox generator keyed by ``(seed, *stream)``. Distinct stream tuples give
statistically independent generators, and the same tuple always reproduces
the same draws.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))
