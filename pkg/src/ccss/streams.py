"""Counter-based random streams.

Every stream is a Philox generator whose key is derived from a tuple of
integers ``(seed, *counters)``.  Two calls with the same tuple return
generators that produce identical sequences, whatever process they run in,
so trials can be split across workers without any coordination.
"""

from __future__ import annotations

import numpy as np

BLOCK_TRIALS = 1000
"""Trials simulated per stream block; part of the reproducibility contract."""

# Stream tags separate independent uses of the same (seed, index) pair.
TAG_SENSE_H0 = 0
TAG_SENSE_H1 = 1
TAG_ORACLE = 7
TAG_BOOTSTRAP = 9


def stream(seed: int, *counters: int) -> np.random.Generator:
    """Return the generator identified by ``(seed, *counters)``."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(c) for c in counters]
    if any(c < 0 for c in key):
        raise ValueError("stream counters must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def block_sizes(trials: int, block: int = BLOCK_TRIALS) -> list[int]:
    """Split ``trials`` into consecutive blocks of ``block`` (last may be short)."""
    if trials < 1:
        raise ValueError("trials must be positive")
    full, rest = divmod(int(trials), block)
    return [block] * full + ([rest] if rest else [])
