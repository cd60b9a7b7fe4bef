"""Seeded random streams.

Every random decision in the simulator comes from a PCG64 generator keyed by
``SeedSequence([seed, *keys])``. Keys identify the purpose (a :class:`Stream`
tag) plus any coordinates such as round and client id, so two strategies run
with the same seed see identical channel draws, and reordering work inside a
round never changes the numbers a client receives.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    INIT = 1
    DATA = 2
    PARTITION = 3
    SELECT = 4
    CHANNEL = 5
    ASSIGN = 6
    TRAIN = 7
    MATRIX = 8
    FADING = 9


def _entropy(seed: int, keys: tuple[int, ...]) -> list[int]:
    words = [int(seed), *(int(k) for k in keys)]
    if any(w < 0 for w in words):
        raise ValueError(f"seed and stream keys must be non-negative, got {words}")
    return words


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(seed, keys))))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed for ``(seed, *keys)``, for APIs that take plain ints."""
    state = np.random.SeedSequence(_entropy(seed, keys)).generate_state(1, np.uint64)
    return int(state[0]) >> 1
