"""Loss and label-transform values against scalar oracles."""

import numpy as np
import pytest

from coeflab.losses import (EPS_LOG, entropy, entropy_rows, kl_divergence,
                            kl_divergence_rows, kl_grad_dlogits, sharpen,
                            sharpen_rows, soft_cross_entropy)
from coeflab.tensor_core import ShapeError, row_softmax


def random_distributions(rng, n, c):
    p = rng.random((n, c))
    return p / p.sum(axis=1, keepdims=True)


def test_cross_entropy_perfect_prediction():
    assert soft_cross_entropy([[1.0, 0.0]], [[1.0, 0.0]]) == 0.0


def test_cross_entropy_worked_values():
    assert soft_cross_entropy([[0.5, 0.5]], [[0.5, 0.5]]) == pytest.approx(
        np.log(2.0), abs=1e-12)
    assert soft_cross_entropy([[1.0, 0.0]], [[0.9, 0.1]]) == pytest.approx(
        0.105361, abs=1e-6)


def test_cross_entropy_shape_mismatch():
    with pytest.raises(ShapeError):
        soft_cross_entropy([[1.0, 0.0]], [[1.0, 0.0, 0.0]])


def test_target_linearity():
    # the identity behind the exact lambda meta-gradient
    rng = np.random.default_rng(3)
    for _ in range(1000):
        a = random_distributions(rng, 1, 4)
        b = random_distributions(rng, 1, 4)
        p = random_distributions(rng, 1, 4)
        beta = rng.random()
        mixed = soft_cross_entropy(beta * a + (1.0 - beta) * b, p)
        split = (beta * soft_cross_entropy(a, p)
                 + (1.0 - beta) * soft_cross_entropy(b, p))
        assert abs(mixed - split) <= 1e-12


def test_kl_identity_and_worked_value():
    assert kl_divergence([[0.5, 0.5]], [[0.5, 0.5]]) == 0.0
    assert kl_divergence([[0.5, 0.5]], [[0.25, 0.75]]) == pytest.approx(
        0.143841, abs=1e-6)


def test_kl_clamped_stays_finite():
    v = kl_divergence([[1.0, 0.0]], [[EPS_LOG, 1.0 - EPS_LOG]])
    assert np.isfinite(v) and v > 10.0


def test_kl_nonnegative():
    rng = np.random.default_rng(4)
    p = random_distributions(rng, 500, 5)
    q = random_distributions(rng, 500, 5)
    assert np.all(kl_divergence_rows(p, q) >= 0.0)
    same = random_distributions(rng, 100, 5)
    assert np.all(np.abs(kl_divergence_rows(same, same)) <= 1e-12)


def test_kl_grad_matches_finite_differences():
    rng = np.random.default_rng(5)
    zp = rng.standard_normal((3, 4))
    zq = rng.standard_normal((3, 4))

    def kl_of(zp_, zq_):
        return kl_divergence_rows(row_softmax(zp_), row_softmax(zq_))

    kl_rows, dzp, dzq = kl_grad_dlogits(row_softmax(zp), row_softmax(zq))
    np.testing.assert_allclose(kl_rows, kl_of(zp, zq), atol=1e-12)
    h = 1e-6
    for i in range(3):
        for c in range(4):
            for z, dz in ((zp, dzp), (zq, dzq)):
                plus, minus = z.copy(), z.copy()
                plus[i, c] += h
                minus[i, c] -= h
                num = (kl_of(plus if z is zp else zp, plus if z is zq else zq)[i]
                       - kl_of(minus if z is zp else zp,
                               minus if z is zq else zq)[i]) / (2 * h)
                assert dz[i, c] == pytest.approx(num, abs=1e-6)


def test_sharpen_identity_at_tau_one():
    rng = np.random.default_rng(6)
    p = random_distributions(rng, 10, 5)
    np.testing.assert_allclose(sharpen_rows(p, 1.0), p, atol=1e-12)


def test_sharpen_uniform_fixed_point():
    u = np.full((1, 4), 0.25)
    np.testing.assert_allclose(sharpen(u, 0.3), u, atol=1e-12)


def test_sharpen_worked_value():
    out = sharpen([[0.8, 0.2]], 0.5)
    np.testing.assert_allclose(out, [[0.941176, 0.058824]], atol=1e-6)


def test_sharpen_errors():
    with pytest.raises(ValueError):
        sharpen([[0.0, 0.0]], 0.5)
    with pytest.raises(ValueError):
        sharpen([[0.5, 0.5]], 0.0)


def test_sharpen_reduces_entropy():
    rng = np.random.default_rng(7)
    p = random_distributions(rng, 1000, 5)
    before = entropy_rows(p)
    after = entropy_rows(sharpen_rows(p, 0.5))
    assert np.all(after <= before + 1e-12)
    assert np.mean(before - after) > 0.01  # strict on typical rows


def test_entropy_values():
    assert entropy([[1.0, 0.0, 0.0]]) == 0.0
    assert entropy([[0.25, 0.25, 0.25, 0.25]]) == pytest.approx(np.log(4.0),
                                                                abs=1e-12)
    assert entropy([[0.8, 0.2]]) == pytest.approx(0.500402, abs=1e-6)
