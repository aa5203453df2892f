"""Deterministic seed derivation for independent work units."""

from __future__ import annotations

import numpy as np


def derive_seed(seed: int, *key: int) -> int:
    """Stable child seed for (seed, key...); independent units get own streams."""
    ss = np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))
