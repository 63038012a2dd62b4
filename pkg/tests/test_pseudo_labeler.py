"""Pseudo-label averaging and the consistency loss."""

import numpy as np
import pytest

from coeflab.augment import AugmentPolicy
from coeflab.losses import entropy_rows, sharpen_rows
from coeflab.model import MlpModel
from coeflab.pseudo_labeler import (augmented_copies, estimate_pseudo_labels,
                                    kl_consistency_loss)
from coeflab.tensor_core import ShapeError


class StubModel:
    """Returns queued prediction matrices, one per forward call."""

    def __init__(self, outputs):
        self.outputs = [np.asarray(o, dtype=np.float64) for o in outputs]
        self.calls = 0

    def forward(self, x):
        out = self.outputs[self.calls]
        self.calls += 1
        return out


IDENTITY = AugmentPolicy(0.0, (1.0, 1.0), 0)
JITTER = AugmentPolicy(0.2, (0.9, 1.1), 0)


def test_augmented_copies_count():
    x = np.zeros((3, 4))
    assert len(augmented_copies(x, JITTER, 1, seed=0)) == 0
    assert len(augmented_copies(x, JITTER, 4, seed=0)) == 3


def test_k1_is_plain_sharpened_prediction():
    m = MlpModel.init((3, 5, 2), 1, "tanh")
    x = np.random.default_rng(0).standard_normal((4, 3))
    out = estimate_pseudo_labels(m, x, JITTER, 1, 0.5, seed=7)
    np.testing.assert_allclose(out.pr_raw, m.forward(x), atol=1e-15)
    np.testing.assert_allclose(out.g, sharpen_rows(m.forward(x), 0.5), atol=1e-15)


def test_identity_policy_any_k():
    m = MlpModel.init((3, 5, 2), 2, "tanh")
    x = np.random.default_rng(1).standard_normal((4, 3))
    out = estimate_pseudo_labels(m, x, IDENTITY, 3, 0.5, seed=7)
    np.testing.assert_allclose(out.pr_raw, m.forward(x), atol=1e-15)


def test_k2_symmetric_stub_predictions():
    # averaging [1,0] and [0,1] gives uniform, unchanged by any tau
    stub = StubModel([[[1.0, 0.0]], [[0.0, 1.0]]])
    out = estimate_pseudo_labels(stub, np.zeros((1, 2)), JITTER, 2, 0.3, seed=0)
    np.testing.assert_allclose(out.pr_raw, [[0.5, 0.5]], atol=1e-15)
    np.testing.assert_allclose(out.g, [[0.5, 0.5]], atol=1e-15)


def test_k_zero_rejected():
    m = MlpModel.init((2, 3, 2), 3)
    with pytest.raises(ValueError):
        estimate_pseudo_labels(m, np.zeros((1, 2)), IDENTITY, 0, 0.5, seed=0)


def test_sharpening_never_raises_entropy():
    m = MlpModel.init((3, 6, 4), 4, "tanh")
    x = np.random.default_rng(2).standard_normal((20, 3))
    out = estimate_pseudo_labels(m, x, JITTER, 2, 0.5, seed=5)
    assert np.all(entropy_rows(out.g) <= entropy_rows(out.pr_raw) + 1e-12)


def test_average_invariant_to_copy_order():
    preds = [[[0.7, 0.3]], [[0.2, 0.8]], [[0.5, 0.5]]]
    a = estimate_pseudo_labels(StubModel(preds), np.zeros((1, 2)), JITTER, 3,
                               0.5, seed=0)
    swapped = [preds[0], preds[2], preds[1]]
    b = estimate_pseudo_labels(StubModel(swapped), np.zeros((1, 2)), JITTER, 3,
                               0.5, seed=0)
    np.testing.assert_allclose(a.pr_raw, b.pr_raw, atol=1e-15)


def test_repeat_calls_bit_identical():
    m = MlpModel.init((3, 5, 2), 6, "tanh")
    x = np.random.default_rng(3).standard_normal((5, 3))
    a = estimate_pseudo_labels(m, x, JITTER, 2, 0.5, seed=11)
    b = estimate_pseudo_labels(m, x, JITTER, 2, 0.5, seed=11)
    np.testing.assert_array_equal(a.g, b.g)
    np.testing.assert_array_equal(a.x_augmented[0], b.x_augmented[0])


def test_kl_consistency_zero_on_identical_input():
    m = MlpModel.init((3, 5, 2), 7, "tanh")
    x = np.random.default_rng(4).standard_normal((6, 3))
    assert kl_consistency_loss(m, x, x) == 0.0


def test_kl_consistency_nonnegative():
    m = MlpModel.init((3, 5, 2), 8, "tanh")
    rng = np.random.default_rng(5)
    assert kl_consistency_loss(m, rng.standard_normal((6, 3)),
                               rng.standard_normal((6, 3))) >= 0.0


def test_kl_consistency_worked_value():
    # row KLs 0.143841 and 0 average to 0.071921
    stub = StubModel([[[0.5, 0.5], [1.0, 0.0]], [[0.25, 0.75], [1.0, 0.0]]])
    v = kl_consistency_loss(stub, np.zeros((2, 2)), np.zeros((2, 2)))
    assert v == pytest.approx(0.071921, abs=1e-6)


def test_kl_consistency_shape_mismatch():
    m = MlpModel.init((3, 5, 2), 9)
    with pytest.raises(ShapeError):
        kl_consistency_loss(m, np.zeros((2, 3)), np.zeros((3, 3)))
