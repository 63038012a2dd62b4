"""Synthetic datasets, label-noise injection, and probe-set construction.

Generators place class structure in the first two feature coordinates and
spread isotropic Gaussian noise over all d dimensions, so any d >= 2 works
with the same interface.  The probe set is drawn from the clean pool before
noise injection and keeps its clean labels; noise only ever touches the
remaining training rows.  Clean labels ride along hidden for evaluation.
"""

from __future__ import annotations

import numpy as np

from . import seeding
from .tensor_core import Matrix


class NoiseSpec:
    def __init__(self, kind: str, ratio: float, seed: int,
                 realized_ratio: float = 0.0):
        if kind not in ("uniform", "asymmetric", "none"):
            raise ValueError(f"unknown noise kind {kind!r}")
        if not 0.0 <= ratio <= 1.0:
            raise ValueError(f"noise ratio must be in [0,1], got {ratio}")
        self.kind = kind
        self.ratio = float(ratio)
        self.seed = int(seed)
        self.realized_ratio = float(realized_ratio)


class NoisyDataset:
    def __init__(self, features: Matrix, noisy_labels: np.ndarray,
                 clean_labels: np.ndarray, probe_features: Matrix,
                 probe_labels: np.ndarray, num_classes: int,
                 noise_spec: NoiseSpec):
        self.features = features
        self.noisy_labels = np.asarray(noisy_labels, dtype=np.int64)
        self.clean_labels = np.asarray(clean_labels, dtype=np.int64)
        self.probe_features = probe_features
        self.probe_labels = np.asarray(probe_labels, dtype=np.int64)
        self.num_classes = int(num_classes)
        self.noise_spec = noise_spec

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def one_hot(labels: np.ndarray, num_classes: int) -> Matrix:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


# ---- generators ----

def _check_gen_args(num_classes: int, dim: int) -> None:
    if num_classes < 2:
        raise ValueError(f"need at least 2 categories, got {num_classes}")
    if dim < 2:
        raise ValueError(f"need at least 2 feature dims, got {dim}")


def blob_means(num_classes: int, radius: float, dim: int) -> Matrix:
    """Category means equally spaced on a circle in the first two coords."""
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    means = np.zeros((num_classes, dim))
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def gen_blobs(num_classes: int, per_class: int, dim: int, radius: float,
              sigma: float, seed: int):
    _check_gen_args(num_classes, dim)
    means = blob_means(num_classes, radius, dim)
    rng = seeding.rng_for(seed)
    feats, labels = [], []
    for c in range(num_classes):
        feats.append(means[c] + sigma * rng.standard_normal((per_class, dim)))
        labels.append(np.full(per_class, c, dtype=np.int64))
    if not feats:
        return np.zeros((0, dim)), np.zeros(0, dtype=np.int64)
    return np.concatenate(feats, axis=0), np.concatenate(labels)


def gen_moons(num_classes: int, per_class: int, dim: int, radius: float,
              sigma: float, seed: int):
    """Two interleaved half-circles; num_classes must be 2."""
    _check_gen_args(num_classes, dim)
    if num_classes != 2:
        raise ValueError("moons generator supports exactly 2 categories")
    rng = seeding.rng_for(seed)
    feats, labels = [], []
    for c in range(2):
        t = rng.uniform(0.0, np.pi, per_class)
        x = np.zeros((per_class, dim))
        if c == 0:
            x[:, 0] = radius * np.cos(t)
            x[:, 1] = radius * np.sin(t)
        else:
            x[:, 0] = radius * (1.0 - np.cos(t))
            x[:, 1] = radius * (0.5 - np.sin(t))
        feats.append(x + sigma * rng.standard_normal((per_class, dim)))
        labels.append(np.full(per_class, c, dtype=np.int64))
    return np.concatenate(feats, axis=0), np.concatenate(labels)


def gen_rings(num_classes: int, per_class: int, dim: int, radius: float,
              sigma: float, seed: int):
    """Concentric rings, one per category, outermost at the given radius."""
    _check_gen_args(num_classes, dim)
    rng = seeding.rng_for(seed)
    feats, labels = [], []
    for c in range(num_classes):
        r = radius * (c + 1) / num_classes
        t = rng.uniform(0.0, 2.0 * np.pi, per_class)
        x = np.zeros((per_class, dim))
        x[:, 0] = r * np.cos(t)
        x[:, 1] = r * np.sin(t)
        feats.append(x + sigma * rng.standard_normal((per_class, dim)))
        labels.append(np.full(per_class, c, dtype=np.int64))
    return np.concatenate(feats, axis=0), np.concatenate(labels)


GENERATORS = {"blobs": gen_blobs, "moons": gen_moons, "rings": gen_rings}


# ---- noise injection ----

def inject_uniform(labels: np.ndarray, num_classes: int, ratio: float,
                   seed: int) -> np.ndarray:
    """Flip each label with probability ratio to a different category."""
    if num_classes < 2:
        raise ValueError(f"need at least 2 categories, got {num_classes}")
    labels = np.asarray(labels, dtype=np.int64)
    rng = seeding.rng_for(seed)
    flip = rng.random(labels.shape[0]) < ratio
    # offset in 1..C-1 keeps a flipped label away from its clean value
    offsets = rng.integers(1, num_classes, size=labels.shape[0])
    noisy = labels.copy()
    noisy[flip] = (labels[flip] + offsets[flip]) % num_classes
    return noisy


def inject_asymmetric(labels: np.ndarray, num_classes: int, ratio: float,
                      seed: int) -> np.ndarray:
    """Flip each label with probability ratio to (c+1) mod C."""
    if num_classes < 2:
        raise ValueError(f"need at least 2 categories, got {num_classes}")
    labels = np.asarray(labels, dtype=np.int64)
    rng = seeding.rng_for(seed)
    flip = rng.random(labels.shape[0]) < ratio
    noisy = labels.copy()
    noisy[flip] = (labels[flip] + 1) % num_classes
    return noisy


def split_probe(features: Matrix, labels: np.ndarray, per_class: int,
                seed: int):
    """Move per_class rows of each category, clean labels intact, to a probe set."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = seeding.rng_for(seed)
    probe_idx = []
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        if rows.shape[0] < per_class:
            raise ValueError(
                f"category {c} has {rows.shape[0]} rows, need {per_class} for the probe")
        probe_idx.append(rng.choice(rows, size=per_class, replace=False))
    probe_idx = np.sort(np.concatenate(probe_idx)) if probe_idx else np.zeros(0, dtype=np.int64)
    mask = np.zeros(labels.shape[0], dtype=bool)
    mask[probe_idx] = True
    return (features[mask], labels[mask]), (features[~mask], labels[~mask])


def build_noisy_dataset(generator: str, num_classes: int, per_class: int,
                        dim: int, radius: float, sigma: float,
                        noise_kind: str, noise_ratio: float,
                        probe_per_class: int, seed: int) -> NoisyDataset:
    """Generate, carve out the probe set, then inject noise into the rest."""
    if generator not in GENERATORS:
        raise ValueError(f"unknown generator {generator!r}")
    feats, labels = GENERATORS[generator](
        num_classes, per_class, dim, radius, sigma,
        seeding.subseed(seed, seeding.DATA, 0))
    (probe_x, probe_y), (train_x, train_y) = split_probe(
        feats, labels, probe_per_class, seeding.subseed(seed, seeding.PROBE))
    if noise_kind == "uniform":
        noisy = inject_uniform(train_y, num_classes, noise_ratio,
                               seeding.subseed(seed, seeding.DATA, 1))
    elif noise_kind == "asymmetric":
        noisy = inject_asymmetric(train_y, num_classes, noise_ratio,
                                  seeding.subseed(seed, seeding.DATA, 1))
    elif noise_kind == "none":
        noisy = train_y.copy()
    else:
        raise ValueError(f"unknown noise kind {noise_kind!r}")
    realized = float(np.mean(noisy != train_y)) if train_y.size else 0.0
    spec = NoiseSpec(noise_kind, noise_ratio, seed, realized)
    return NoisyDataset(train_x, noisy, train_y, probe_x, probe_y,
                        num_classes, spec)


# ---- dataset file format ----

def save_dataset(ds: NoisyDataset, path) -> None:
    """Text table: f0..f{d-1},clean_label,noisy_label,is_probe; train rows first."""
    d = ds.dim
    header = ",".join([f"f{j}" for j in range(d)] + ["clean_label", "noisy_label",
                                                     "is_probe"])
    lines = [header]
    for i in range(ds.n):
        cells = [repr(float(v)) for v in ds.features[i]]
        cells += [str(int(ds.clean_labels[i])), str(int(ds.noisy_labels[i])), "0"]
        lines.append(",".join(cells))
    for i in range(ds.probe_features.shape[0]):
        cells = [repr(float(v)) for v in ds.probe_features[i]]
        cells += [str(int(ds.probe_labels[i])), str(int(ds.probe_labels[i])), "1"]
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> NoisyDataset:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = lines[0].split(",")
    if len(header) < 5 or header[-3:] != ["clean_label", "noisy_label", "is_probe"]:
        raise ValueError(f"{path}: line 1: bad header {lines[0]!r}")
    d = len(header) - 3
    if header[:d] != [f"f{j}" for j in range(d)]:
        raise ValueError(f"{path}: line 1: bad feature columns")
    feats, clean, noisy, probe_flags = [], [], [], []
    for ln_no, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != d + 3:
            raise ValueError(f"{path}: line {ln_no}: expected {d + 3} fields")
        try:
            feats.append([float(c) for c in cells[:d]])
            clean.append(int(cells[d]))
            noisy.append(int(cells[d + 1]))
            probe_flags.append(int(cells[d + 2]))
        except ValueError as exc:
            raise ValueError(f"{path}: line {ln_no}: {exc}") from None
    feats = np.array(feats, dtype=np.float64).reshape(len(clean), d)
    clean = np.array(clean, dtype=np.int64)
    noisy = np.array(noisy, dtype=np.int64)
    is_probe = np.array(probe_flags, dtype=bool)
    labels_seen = np.concatenate([clean, noisy])
    num_classes = int(labels_seen.max()) + 1 if labels_seen.size else 0
    realized = (float(np.mean(noisy[~is_probe] != clean[~is_probe]))
                if np.any(~is_probe) else 0.0)
    spec = NoiseSpec("none", 0.0, 0, realized)
    return NoisyDataset(feats[~is_probe], noisy[~is_probe], clean[~is_probe],
                        feats[is_probe], clean[is_probe], num_classes, spec)
