"""Synthetic generators, label corruption, probe split, dataset files."""

import numpy as np
import pytest

from coeflab.noise_harness import (GENERATORS, NoiseSpec, blob_means,
                                   build_noisy_dataset, gen_blobs, gen_moons,
                                   gen_rings, inject_asymmetric,
                                   inject_uniform, load_dataset, one_hot,
                                   save_dataset, split_probe)


def test_one_hot():
    out = one_hot(np.array([2, 0]), 3)
    np.testing.assert_array_equal(out, [[0, 0, 1], [1, 0, 0]])


def test_blob_means_on_circle():
    means = blob_means(4, 2.0, 5)
    np.testing.assert_allclose(np.linalg.norm(means[:, :2], axis=1), 2.0,
                               atol=1e-12)
    np.testing.assert_array_equal(means[:, 2:], 0.0)
    np.testing.assert_allclose(means[0], [2.0, 0.0, 0.0, 0.0, 0.0], atol=1e-12)


def test_gen_blobs_zero_sigma_sits_on_means():
    feats, labels = gen_blobs(3, 5, 4, 1.5, 0.0, seed=0)
    assert feats.shape == (15, 4)
    means = blob_means(3, 1.5, 4)
    np.testing.assert_array_equal(feats, means[labels])
    np.testing.assert_array_equal(labels, np.repeat(np.arange(3), 5))


def test_gen_blobs_deterministic():
    a = gen_blobs(2, 10, 3, 1.0, 0.5, seed=7)
    b = gen_blobs(2, 10, 3, 1.0, 0.5, seed=7)
    np.testing.assert_array_equal(a[0], b[0])
    c = gen_blobs(2, 10, 3, 1.0, 0.5, seed=8)
    assert not np.array_equal(a[0], c[0])


def test_gen_blobs_empty():
    feats, labels = gen_blobs(3, 0, 4, 1.0, 1.0, seed=0)
    assert feats.shape == (0, 4)
    assert labels.shape == (0,)


def test_gen_blobs_separable_at_wide_radius():
    feats, labels = gen_blobs(4, 200, 2, 4.0, 0.5, seed=1)
    means = blob_means(4, 4.0, 2)
    d2 = ((feats[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    acc = np.mean(d2.argmin(axis=1) == labels)
    assert acc >= 0.99


def test_generator_argument_errors():
    with pytest.raises(ValueError):
        gen_blobs(1, 5, 3, 1.0, 1.0, seed=0)
    with pytest.raises(ValueError):
        gen_blobs(3, 5, 1, 1.0, 1.0, seed=0)
    with pytest.raises(ValueError):
        gen_moons(3, 5, 2, 1.0, 0.1, seed=0)


def test_gen_moons_shape_and_determinism():
    feats, labels = gen_moons(2, 25, 3, 1.0, 0.05, seed=3)
    assert feats.shape == (50, 3)
    np.testing.assert_array_equal(labels, np.repeat([0, 1], 25))
    again, _ = gen_moons(2, 25, 3, 1.0, 0.05, seed=3)
    np.testing.assert_array_equal(feats, again)


def test_gen_rings_radii():
    feats, labels = gen_rings(3, 40, 2, 3.0, 0.0, seed=4)
    norms = np.linalg.norm(feats, axis=1)
    for c in range(3):
        np.testing.assert_allclose(norms[labels == c], 3.0 * (c + 1) / 3.0,
                                   atol=1e-12)


def test_generators_registry():
    assert set(GENERATORS) == {"blobs", "moons", "rings"}


def test_inject_uniform_extremes():
    labels = np.arange(12) % 4
    np.testing.assert_array_equal(inject_uniform(labels, 4, 0.0, seed=0),
                                  labels)
    flipped = inject_uniform(labels, 4, 1.0, seed=0)
    assert np.all(flipped != labels)
    assert np.all((flipped >= 0) & (flipped < 4))
    with pytest.raises(ValueError):
        inject_uniform(labels, 1, 0.5, seed=0)


def test_inject_uniform_realized_rate():
    labels = np.zeros(10000, dtype=np.int64)
    noisy = inject_uniform(labels, 4, 0.4, seed=5)
    rate = float(np.mean(noisy != labels))
    assert 0.38 <= rate <= 0.42
    assert np.all(noisy[noisy != 0] != 0)


def test_inject_uniform_deterministic():
    labels = np.arange(100) % 5
    a = inject_uniform(labels, 5, 0.3, seed=9)
    b = inject_uniform(labels, 5, 0.3, seed=9)
    np.testing.assert_array_equal(a, b)


def test_inject_asymmetric_cyclic():
    labels = np.array([0, 1, 2, 0, 1, 2])
    np.testing.assert_array_equal(inject_asymmetric(labels, 3, 0.0, seed=0),
                                  labels)
    np.testing.assert_array_equal(inject_asymmetric(labels, 3, 1.0, seed=0),
                                  (labels + 1) % 3)
    partial = inject_asymmetric(np.arange(1000) % 3, 3, 0.5, seed=1)
    clean = np.arange(1000) % 3
    changed = partial != clean
    np.testing.assert_array_equal(partial[changed], (clean[changed] + 1) % 3)


def test_split_probe_takes_per_class_rows():
    feats = np.arange(24, dtype=np.float64).reshape(12, 2)
    labels = np.repeat(np.arange(4), 3)
    (px, py), (tx, ty) = split_probe(feats, labels, 1, seed=0)
    assert px.shape == (4, 2)
    np.testing.assert_array_equal(np.sort(py), np.arange(4))
    assert tx.shape == (8, 2)
    # disjoint and exhaustive: every original row lands on exactly one side
    merged = np.sort(np.concatenate([px[:, 0], tx[:, 0]]))
    np.testing.assert_array_equal(merged, feats[:, 0])


def test_split_probe_zero_rows():
    feats = np.zeros((6, 2))
    labels = np.repeat([0, 1], 3)
    (px, py), (tx, ty) = split_probe(feats, labels, 0, seed=0)
    assert px.shape == (0, 2)
    assert tx.shape == (6, 2)


def test_split_probe_insufficient():
    feats = np.zeros((4, 2))
    labels = np.array([0, 0, 0, 1])
    with pytest.raises(ValueError, match="category 1"):
        split_probe(feats, labels, 2, seed=0)


def test_build_noisy_dataset_probe_labels_stay_clean():
    # sigma 0 pins every row to its category mean, so labels are checkable
    ds = build_noisy_dataset("blobs", 4, 30, 3, 2.0, 0.0, "uniform", 0.8,
                             5, seed=11)
    means = blob_means(4, 2.0, 3)
    np.testing.assert_array_equal(ds.probe_features, means[ds.probe_labels])
    np.testing.assert_array_equal(ds.features, means[ds.clean_labels])
    assert ds.probe_features.shape == (20, 3)
    assert ds.n == 100
    rate = float(np.mean(ds.noisy_labels != ds.clean_labels))
    assert rate == ds.noise_spec.realized_ratio
    assert 0.6 <= rate <= 0.95


def test_build_noisy_dataset_deterministic():
    a = build_noisy_dataset("blobs", 3, 20, 4, 1.5, 0.7, "uniform", 0.4, 2, 5)
    b = build_noisy_dataset("blobs", 3, 20, 4, 1.5, 0.7, "uniform", 0.4, 2, 5)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.noisy_labels, b.noisy_labels)
    np.testing.assert_array_equal(a.probe_features, b.probe_features)


def test_build_noisy_dataset_none_noise():
    ds = build_noisy_dataset("blobs", 2, 10, 2, 1.0, 0.3, "none", 0.0, 1, 0)
    np.testing.assert_array_equal(ds.noisy_labels, ds.clean_labels)
    assert ds.noise_spec.realized_ratio == 0.0


def test_build_noisy_dataset_bad_args():
    with pytest.raises(ValueError, match="generator"):
        build_noisy_dataset("spiral", 2, 10, 2, 1.0, 0.3, "none", 0.0, 1, 0)
    with pytest.raises(ValueError, match="noise kind"):
        build_noisy_dataset("blobs", 2, 10, 2, 1.0, 0.3, "salt", 0.0, 1, 0)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("gaussian", 0.1, 0)
    with pytest.raises(ValueError):
        NoiseSpec("uniform", 1.5, 0)


def test_dataset_roundtrip(tmp_path):
    ds = build_noisy_dataset("blobs", 3, 8, 4, 1.5, 0.6, "uniform", 0.5, 2, 3)
    path = tmp_path / "ds.csv"
    save_dataset(ds, path)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.noisy_labels, ds.noisy_labels)
    np.testing.assert_array_equal(back.clean_labels, ds.clean_labels)
    np.testing.assert_array_equal(back.probe_features, ds.probe_features)
    np.testing.assert_array_equal(back.probe_labels, ds.probe_labels)
    assert back.num_classes == 3


def test_dataset_file_layout(tmp_path):
    ds = build_noisy_dataset("blobs", 2, 4, 2, 1.0, 0.1, "none", 0.0, 1, 0)
    path = tmp_path / "ds.csv"
    save_dataset(ds, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "f0,f1,clean_label,noisy_label,is_probe"
    flags = [ln.split(",")[-1] for ln in lines[1:]]
    assert flags == ["0"] * ds.n + ["1"] * ds.probe_features.shape[0]
    # byte-identical on rewrite
    path2 = tmp_path / "ds2.csv"
    save_dataset(ds, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_dataset_errors(tmp_path):
    bad_header = tmp_path / "a.csv"
    bad_header.write_text("x0,x1,labels\n0,0,0\n")
    with pytest.raises(ValueError, match="line 1"):
        load_dataset(bad_header)

    short_row = tmp_path / "b.csv"
    short_row.write_text("f0,f1,clean_label,noisy_label,is_probe\n"
                         "0.0,1.0,0,0,0\n0.0,1.0,0\n")
    with pytest.raises(ValueError, match="line 3"):
        load_dataset(short_row)

    bad_cell = tmp_path / "c.csv"
    bad_cell.write_text("f0,f1,clean_label,noisy_label,is_probe\n"
                        "0.0,oops,0,0,0\n")
    with pytest.raises(ValueError, match="line 2"):
        load_dataset(bad_cell)

    empty = tmp_path / "d.csv"
    empty.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_dataset(empty)
