"""
Dreammap rng module. Provides counter-based derivation of independent random streams.

Every random draw in an experiment comes from `stream(root_seed, purpose, *counters)`, a
generator seeded from the root seed and a spawn key naming the purpose and position
(step, candidate cell, ...). Two draws with the same key are identical whatever order
the surrounding code runs in, which keeps results independent of parallel scheduling.
"""


import numpy as np

from .errors import ConfigError

# purposes
CANDIDATES = 1
ENCODE = 2
DREAM = 3
SELECT = 4
TRAIN = 5
HOLDOUT = 6
RANDOM_POINTS = 7
REPETITION = 8


def stream(root_seed, *key):
    """Generator for the sub-stream of `root_seed` identified by the non-negative integer `key`."""

    if root_seed < 0 or any(k < 0 for k in key):
        raise ConfigError(f"seeds and stream keys must be non-negative, got {root_seed} {key}")

    return np.random.default_rng(np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in key)))


def derive(root_seed, *key):
    """64-bit integer seed for the sub-stream identified by `key`."""

    return int(stream(root_seed, *key).integers(0, 2**63))
