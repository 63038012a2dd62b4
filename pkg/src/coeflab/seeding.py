"""Deterministic seed derivation for every stochastic component of a run.

All randomness in the package flows from numpy ``SeedSequence`` entropy built
out of non-negative integer parts, so a whole run is a pure function of its
master seed.  Fixed role tags keep unrelated streams (init, shuffling, probe
sampling, augmentation, mixup, data synthesis) from ever colliding.
"""

from __future__ import annotations

import numpy as np

# role tags mixed into derived seeds
INIT = 1
SHUFFLE = 2
PROBE = 3
AUGMENT = 4
MIXUP = 5
DATA = 6
TEST = 7
STEP = 8


def _parts(parts) -> list[int]:
    out = []
    for p in parts:
        p = int(p)
        if p < 0:
            raise ValueError(f"seed parts must be non-negative, got {p}")
        out.append(p)
    return out


def rng_for(*parts: int) -> np.random.Generator:
    """Generator keyed by a tuple of non-negative integers."""
    return np.random.default_rng(_parts(parts))


def subseed(*parts: int) -> int:
    """Derive a 64-bit integer seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence(_parts(parts)).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
