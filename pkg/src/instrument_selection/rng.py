"""Seeded random streams.

Every stochastic operation takes an explicit seed and draws from its own
named stream, so two operations sharing a seed never share generator state.
"""

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    SCENARIO = 0
    SIMILARITY = 1
    EXPERIMENT = 2
    OBSERVATIONAL = 3
    NORM = 4
    RANDOM_SELECTION = 5
    FINITE_SAMPLE = 6


def make_rng(seed: int, stream: Stream, *substream: int) -> np.random.Generator:
    """Return a PCG64 generator for ``(seed, stream, *substream)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed), int(stream), *(int(s) for s in substream)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
