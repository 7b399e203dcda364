"""Deterministic RNG substreams.

Every source of randomness in a run is keyed by (seed, purpose, epoch, ...)
so that results are reproducible and independent of evaluation order.
Purpose tags keep unrelated consumers from sharing a stream.
"""

from __future__ import annotations

import numpy as np

# Stable integer tags for substream purposes.
INIT = 1
WARM_START = 2
SCORING = 3
SCHEDULING = 4
TRAINING = 5
EVAL = 6


def substream(*keys: int) -> np.random.Generator:
    """Return a generator keyed by a tuple of non-negative integers."""
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


def derive_seed(*keys: int) -> int:
    """Collapse a key tuple into a single integer seed for further keying."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1, np.uint64)[0])
