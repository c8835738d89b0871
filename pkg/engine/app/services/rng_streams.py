"""
Path: engine/app/services/rng_streams.py
Purpose: Reproducible counter-based random streams keyed by (base seed, stream key)
Logic:
  - Each key maps to SeedSequence(base_seed, spawn_key=key) and then to Philox generators
  - Every stream yields two independent generators: dynamics draws and event-time draws,
    so recording jump instants never shifts the dynamics
  - No ambient entropy anywhere
"""

from typing import Sequence, Tuple

import numpy as np

from ..errors import DomainError

SEED_LIMIT = 2 ** 64


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool) or not (0 <= int(seed) < SEED_LIMIT):
        raise DomainError(f"Invalid seed: {seed}. Must be an unsigned 64-bit integer.")
    return int(seed)


def stream_generators(base_seed: int, key: Sequence[int]) -> Tuple[np.random.Generator, np.random.Generator]:
    """
    Generators for one stream.

    Args:
        base_seed: User seed
        key: Stream key, e.g. (block,) or (role, block)

    Returns:
        (dynamics generator, event-time generator)
    """
    root = np.random.SeedSequence(check_seed(base_seed), spawn_key=tuple(int(k) for k in key))
    dynamics, timing = root.spawn(2)
    return np.random.Generator(np.random.Philox(dynamics)), np.random.Generator(np.random.Philox(timing))
