"""Joint-batch assembly and probe-anchored mixup.

After the meta step the train batch is split by the weight criterion, glued
together with the probe batch and the augmented copies, and every row of the
resulting pool is mixed with a permutation partner.  Rows keep a source tag so
the two mixup losses can be separated by anchor origin; with interior beta
draws the model never sees a raw probe row.
"""

from __future__ import annotations

import numpy as np

from . import seeding
from .losses import cross_entropy_rows
from .model import MlpModel
from .tensor_core import Matrix, ShapeError

TAG_PROBE = 0
TAG_CLEAN = 1
TAG_MISLABELED = 2
TAG_AUG_CLEAN = 3
TAG_AUG_MISLABELED = 4

TAG_NAMES = {TAG_PROBE: "probe", TAG_CLEAN: "clean", TAG_MISLABELED: "mislabeled",
             TAG_AUG_CLEAN: "aug_clean", TAG_AUG_MISLABELED: "aug_mislabeled"}


class JointBatch:
    def __init__(self, features: Matrix, labels: Matrix, source_tags: np.ndarray):
        if features.shape[0] != labels.shape[0] or features.shape[0] != len(source_tags):
            raise ShapeError(
                f"joint batch rows disagree: {features.shape[0]} features, "
                f"{labels.shape[0]} labels, {len(source_tags)} tags")
        self.features = features
        self.labels = labels
        self.source_tags = np.asarray(source_tags, dtype=np.int8)

    def __len__(self) -> int:
        return self.features.shape[0]


class MixupBatch:
    def __init__(self, mixed_features: Matrix, mixed_labels: Matrix,
                 anchor_is_probe: np.ndarray, beta_values: np.ndarray):
        self.mixed_features = mixed_features
        self.mixed_labels = mixed_labels
        self.anchor_is_probe = np.asarray(anchor_is_probe, dtype=bool)
        self.beta_values = np.asarray(beta_values, dtype=np.float64)

    def __len__(self) -> int:
        return self.mixed_features.shape[0]


def split_by_weight(omega_star: np.ndarray, t: float):
    """Indices with omega* < T are treated as mislabeled, the rest as clean."""
    omega_star = np.asarray(omega_star, dtype=np.float64)
    idx = np.arange(omega_star.shape[0])
    mislabeled = omega_star < t
    return idx[~mislabeled], idx[mislabeled]


def sample_beta(seed: int, draw: int = 0) -> float:
    """One Beta(0.5, 0.5) draw, resampled if it lands exactly on 0 or 1."""
    rng = seeding.rng_for(seed, draw)
    while True:
        v = float(rng.beta(0.5, 0.5))
        if 0.0 < v < 1.0:
            return v


def build_joint_batch(probe_x: Matrix, probe_y: Matrix, train_x: Matrix,
                      train_y: Matrix, train_aug: Matrix, g: Matrix,
                      split, y_star_policy: str = "pseudo",
                      y_star: Matrix = None) -> JointBatch:
    """Probe rows + train rows + augmented copies, labels by source.

    Probe rows carry trusted labels.  Split-clean train rows keep their
    original labels and their augmented copies mirror them.  Split-mislabeled
    rows (and copies) take pseudo labels g, or the selected labels when
    y_star_policy == "selected".
    """
    clean_idx, mislabeled_idx = split
    n = train_x.shape[0]
    if train_y.shape[0] != n or g.shape[0] != n or train_aug.shape[0] != n:
        raise ShapeError("train batch pieces disagree in row count")
    if len(clean_idx) + len(mislabeled_idx) != n:
        raise ShapeError("split does not cover the train batch")
    if y_star_policy not in ("pseudo", "selected"):
        raise ValueError(f"unknown y_star_policy {y_star_policy!r}")
    relabel = g
    if y_star_policy == "selected":
        if y_star is None:
            raise ValueError("y_star_policy 'selected' needs y_star")
        relabel = y_star

    labels = train_y.copy()
    labels[mislabeled_idx] = relabel[mislabeled_idx]
    tags = np.full(n, TAG_CLEAN, dtype=np.int8)
    tags[mislabeled_idx] = TAG_MISLABELED
    aug_tags = np.where(tags == TAG_CLEAN, TAG_AUG_CLEAN, TAG_AUG_MISLABELED)

    features = np.concatenate([probe_x, train_x, train_aug], axis=0)
    all_labels = np.concatenate([probe_y, labels, labels], axis=0)
    all_tags = np.concatenate(
        [np.full(probe_x.shape[0], TAG_PROBE, dtype=np.int8), tags,
         aug_tags.astype(np.int8)])
    return JointBatch(features, all_labels, all_tags)


def mixup_batch(joint: JointBatch, seed: int) -> MixupBatch:
    """Mix each row with a partner from one shared permutation of the pool."""
    n = len(joint)
    if n == 0:
        raise ShapeError("cannot mix an empty joint batch")
    perm = seeding.rng_for(seed).permutation(n)
    betas = np.array([sample_beta(seed, i) for i in range(n)])
    b = betas[:, None]
    mixed_x = b * joint.features + (1.0 - b) * joint.features[perm]
    mixed_y = b * joint.labels + (1.0 - b) * joint.labels[perm]
    return MixupBatch(mixed_x, mixed_y, joint.source_tags == TAG_PROBE, betas)


def mixup_losses(model: MlpModel, mix: MixupBatch):
    """(mean CE over probe-anchored rows, mean CE over the rest); empty side = 0."""
    probs = model.forward(mix.mixed_features)
    ce = cross_entropy_rows(mix.mixed_labels, probs)
    return mixup_loss_split(ce, mix.anchor_is_probe)


def mixup_loss_split(ce_rows: np.ndarray, anchor_is_probe: np.ndarray):
    probe_rows = ce_rows[anchor_is_probe]
    other_rows = ce_rows[~anchor_is_probe]
    loss_p = float(np.mean(probe_rows)) if probe_rows.size else 0.0
    loss_u = float(np.mean(other_rows)) if other_rows.size else 0.0
    return loss_p, loss_u
