"""Stochastic input perturbations standing in for image augmentation policies.

Feature vectors get additive Gaussian jitter, a multiplicative scale, and a
contiguous zeroed span (a 1-D cutout).  Randomness is independent per row and
keyed by (seed, row index), so a batch augmentation is reproducible from its
seed alone and insensitive to batch size changes elsewhere in the run.
"""

from __future__ import annotations

import numpy as np

from . import seeding
from .tensor_core import Matrix


class AugmentPolicy:
    def __init__(self, jitter_sigma: float = 0.0, scale_range=(1.0, 1.0),
                 cutout_span: int = 0):
        lo, hi = float(scale_range[0]), float(scale_range[1])
        if jitter_sigma < 0:
            raise ValueError(f"jitter_sigma must be >= 0, got {jitter_sigma}")
        if lo > hi:
            raise ValueError(f"scale_range lo {lo} > hi {hi}")
        if cutout_span < 0:
            raise ValueError(f"cutout_span must be >= 0, got {cutout_span}")
        self.jitter_sigma = float(jitter_sigma)
        self.scale_range = (lo, hi)
        self.cutout_span = int(cutout_span)

    def is_identity(self) -> bool:
        return (self.jitter_sigma == 0.0 and self.scale_range == (1.0, 1.0)
                and self.cutout_span == 0)


def augment(x: Matrix, policy: AugmentPolicy, seed: int) -> Matrix:
    """Per-row x_hat = scale * (x + noise) with a contiguous span zeroed.

    Every row draws in the fixed order noise, scale, cutout start from its own
    generator, so the stream layout does not depend on which policy fields are
    active.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[1]
    if policy.cutout_span > d:
        raise ValueError(f"cutout_span {policy.cutout_span} exceeds feature dim {d}")
    lo, hi = policy.scale_range
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        rng = seeding.rng_for(seed, i)
        noise = rng.standard_normal(d) * policy.jitter_sigma
        scale = rng.uniform(lo, hi)
        row = scale * (x[i] + noise)
        if policy.cutout_span > 0:
            start = int(rng.integers(0, d - policy.cutout_span + 1))
            row[start:start + policy.cutout_span] = 0.0
        out[i] = row
    return out
