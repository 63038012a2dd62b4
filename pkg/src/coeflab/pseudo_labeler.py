"""Pseudo labels from prediction averaging over augmentations, plus the
prediction-consistency KL loss.

The average uses the base prediction plus K-1 augmented-copy predictions (K
terms total).  Pseudo labels are constants downstream: nothing differentiates
through them, which is what makes the meta step's dot-product gradients exact.
"""

from __future__ import annotations

import numpy as np

from . import seeding
from .augment import AugmentPolicy, augment
from .losses import kl_divergence_rows, sharpen_rows
from .model import MlpModel
from .tensor_core import Matrix, ShapeError


class PseudoLabelBatch:
    def __init__(self, g: Matrix, pr_raw: Matrix, tau: float, k: int,
                 x_augmented: list):
        self.g = g                      # sharpened pseudo labels (B, C)
        self.pr_raw = pr_raw            # pre-sharpening averages (B, C)
        self.tau = tau
        self.k = k
        self.x_augmented = x_augmented  # the K-1 augmented copies, in draw order


def augmented_copies(x: Matrix, policy: AugmentPolicy, k: int, seed: int) -> list:
    """K-1 independent augmented copies of x, each from its own derived seed."""
    return [augment(x, policy, seeding.subseed(seed, seeding.AUGMENT, j))
            for j in range(k - 1)]


def estimate_pseudo_labels(model: MlpModel, x: Matrix, policy: AugmentPolicy,
                           k: int, tau: float, seed: int) -> PseudoLabelBatch:
    """Average Phi over x and K-1 augmentations, then sharpen at tau."""
    if k < 1:
        raise ValueError(f"need at least one prediction term, got K={k}")
    copies = augmented_copies(x, policy, k, seed)
    total = model.forward(x).copy()
    for xa in copies:
        total += model.forward(xa)
    pr_raw = total / float(k)
    g = sharpen_rows(pr_raw, tau)
    return PseudoLabelBatch(g, pr_raw, tau, k, copies)


def kl_consistency_loss(model: MlpModel, x: Matrix, x_hat: Matrix) -> float:
    """Batch mean of KL(Phi(x_i) || Phi(x_hat_i))."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    p = model.forward(x)
    q = model.forward(x_hat)
    return float(np.mean(kl_divergence_rows(p, q)))
