"""Deterministic random-stream derivation.

Every stochastic step in the package draws from a generator derived
from explicit integer keys, so per-row work can run in any order (or
in parallel) and still reproduce the serial result bit for bit.
"""

from __future__ import annotations

import numpy as np


def derive_rng(*keys: int) -> np.random.Generator:
    """Return an independent generator for the given key path.

    ``derive_rng(seed, row_index)`` always yields the same stream,
    regardless of how many other streams were consumed in between.
    """
    if not keys:
        raise ValueError("at least one key is required")
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]))


def derive_seed(*keys: int) -> int:
    """Collapse a key path into a single integer seed."""
    if not keys:
        raise ValueError("at least one key is required")
    seq = np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys])
    return int(seq.generate_state(1, dtype=np.uint64)[0])
