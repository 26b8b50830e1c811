"""Deterministic random-stream derivation.

Every stochastic component in the package draws from a generator keyed by an
integer path (seed, stream, substream, ...).  Streams with different paths are
statistically independent, and the same path always reproduces the same draws,
which is what makes whole runs replayable from a single seed.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _key(parts) -> list[int]:
    return [int(p) & _MASK for p in parts]


def substream(*path: int) -> np.random.Generator:
    """Generator for the stream addressed by an integer path."""
    if not path:
        raise ValueError("substream needs at least one path component")
    return np.random.default_rng(np.random.SeedSequence(_key(path)))


def child_seed(*path: int) -> int:
    """Collapse a path to a single derived 63-bit seed."""
    if not path:
        raise ValueError("child_seed needs at least one path component")
    state = np.random.SeedSequence(_key(path)).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))
