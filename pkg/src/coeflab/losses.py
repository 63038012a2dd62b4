"""Scalar losses and label transformations on probability vectors.

Everything uses the natural logarithm.  Log arguments are clamped below by
``EPS_LOG`` so losses stay finite on degenerate predictions; at 64-bit
precision the clamp is invisible to the gradient checks elsewhere in the
package.
"""

from __future__ import annotations

import numpy as np

from .tensor_core import ShapeError

# lower clamp inside every logarithm
EPS_LOG = 1e-12


def _check_rows(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def cross_entropy_rows(targets: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """Per-row -sum_c target_c * ln(pred_c) for matching B x C matrices."""
    _check_rows(targets, preds, "cross_entropy")
    return -np.sum(targets * np.log(np.maximum(preds, EPS_LOG)), axis=-1)


def soft_cross_entropy(target: np.ndarray, pred: np.ndarray) -> float:
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _check_rows(target, pred, "cross_entropy")
    return float(-np.sum(target * np.log(np.maximum(pred, EPS_LOG))))


def kl_divergence_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Per-row KL(p || q) with the 0 * ln 0 := 0 convention."""
    _check_rows(p, q, "kl_divergence")
    logs = np.log(np.maximum(p, EPS_LOG)) - np.log(np.maximum(q, EPS_LOG))
    return np.sum(p * logs, axis=-1)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.squeeze(kl_divergence_rows(p, q)))


def kl_grad_dlogits(p: np.ndarray, q: np.ndarray):
    """Gradients of per-row KL(p || q) w.r.t. the logits behind p and q.

    With p = softmax(zp) and q = softmax(zq):
        dKL/dzp_c = p_c * ((ln p_c - ln q_c) - KL_row)
        dKL/dzq_c = q_c - p_c
    Returns (kl_rows, dzp, dzq).
    """
    _check_rows(p, q, "kl_grad")
    s = p * (np.log(np.maximum(p, EPS_LOG)) - np.log(np.maximum(q, EPS_LOG)))
    kl_rows = np.sum(s, axis=1)
    dzp = s - p * kl_rows[:, None]
    dzq = q - p
    return kl_rows, dzp, dzq


def sharpen_rows(pr: np.ndarray, tau: float) -> np.ndarray:
    """Temperature sharpening: rows pr_c^(1/tau) renormalized to sum 1."""
    if tau <= 0:
        raise ValueError(f"sharpening temperature must be > 0, got {tau}")
    pr = np.asarray(pr, dtype=np.float64)
    powered = np.power(pr, 1.0 / tau)
    totals = np.sum(powered, axis=-1, keepdims=True)
    if np.any(totals == 0.0):
        raise ValueError("cannot sharpen an all-zero distribution")
    return powered / totals


def sharpen(pr: np.ndarray, tau: float) -> np.ndarray:
    return sharpen_rows(np.asarray(pr, dtype=np.float64), tau)


def entropy_rows(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return -np.sum(p * np.log(np.maximum(p, EPS_LOG)), axis=-1)


def entropy(p: np.ndarray) -> float:
    return float(np.squeeze(entropy_rows(p)))
