"""Reproducible random streams.

Every draw comes from a Philox-4x64 counter-based generator keyed by a
``SeedSequence(seed, spawn_key=(replicate, block))``.  Stream identity depends
only on those integers, never on thread scheduling, so replicates can be
produced in any order or in parallel and still be bit-identical.

Block indices in use:

* ``0`` -- a realization on the requested box,
* ``1`` -- an independent copy of a single Bernstein block (Lindeberg term).
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "WHOLE_BOX", "SINGLE_BLOCK", "MAX_SEED"]

WHOLE_BOX = 0
SINGLE_BLOCK = 1
MAX_SEED = 2**64 - 1


def stream(seed: int, replicate: int = 0, block: int = WHOLE_BOX) -> np.random.Generator:
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if replicate < 0 or block < 0:
        raise ValueError("replicate and block indices must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(block)))
    return np.random.Generator(np.random.Philox(ss))
