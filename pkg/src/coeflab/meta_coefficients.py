"""The meta step: differentiate the probe loss through a one-step momentum
lookahead to get per-example weight and label-selection coefficients.

With blended targets P(lambda0)_i = lambda0*y_i + (1-lambda0)*g_i the
lookahead

    theta' = theta - alpha*(mu*v + grad_theta sum_i omega0_i * L(P_i, Phi(x_i)))

is affine in both omega and lambda, because the cross-entropy gradient is
linear in its target.  The probe-loss derivatives are therefore exact dot
products, no Hessian term:

    d_omega_i  = -alpha * gp . grad_theta L(P_i, Phi(x_i; theta))
    d_lambda_i = -alpha * omega0_i * gp . (grad L(y_i, .) - grad L(g_i, .))

where gp is the mean probe cross-entropy gradient at theta'.  Per-example
training gradients never get materialized here: gp . grad L(t_i, Phi(x_i))
equals jvp_i . (p_i - t_i) with jvp the forward-mode derivative of the logits
along gp, one extra forward-sized pass for the whole batch.

A finite-difference oracle (fd_meta_gradient) recomputes the lookahead from
scratch at perturbed coefficients; tests hold the closed forms to it.
"""

from __future__ import annotations

import numpy as np

from .losses import cross_entropy_rows
from .model import MlpModel, MomentumState
from .tensor_core import EmptyInputError, Matrix, ShapeError

_TIEBREAKS = ("original", "pseudo")


class MetaConfig:
    def __init__(self, alpha_meta: float, lambda0: float = 0.9,
                 eps_norm: float = 1e-12, zero_grad_tiebreak: str = "original"):
        if not np.isfinite(alpha_meta) or alpha_meta < 0:
            raise ValueError(f"alpha_meta must be finite and >= 0, got {alpha_meta}")
        if not 0.0 <= lambda0 <= 1.0:
            raise ValueError(f"lambda0 must be in [0,1], got {lambda0}")
        if zero_grad_tiebreak not in _TIEBREAKS:
            raise ValueError(f"zero_grad_tiebreak must be one of {_TIEBREAKS}")
        self.alpha_meta = float(alpha_meta)
        self.lambda0 = float(lambda0)
        self.eps_norm = float(eps_norm)
        self.zero_grad_tiebreak = zero_grad_tiebreak


class DataCoefficients:
    """Per-example meta outputs for one training batch."""

    def __init__(self, omega_star: np.ndarray, lambda_star: np.ndarray,
                 y_star: Matrix, d_omega: np.ndarray, d_lambda: np.ndarray):
        self.omega_star = omega_star
        self.lambda_star = lambda_star
        self.y_star = y_star
        self.d_omega = d_omega
        self.d_lambda = d_lambda


def blend_labels(y: Matrix, g: Matrix, lambda0: float) -> Matrix:
    """P(lambda0) = lambda0*y + (1-lambda0)*g, rowwise."""
    if y.shape != g.shape:
        raise ShapeError(f"label shapes differ: {y.shape} vs {g.shape}")
    return lambda0 * y + (1.0 - lambda0) * g


def _check_train_shapes(x, y, g) -> None:
    if y.shape != g.shape or y.shape[0] != x.shape[0]:
        raise ShapeError(
            f"batch shapes inconsistent: x {x.shape}, y {y.shape}, g {g.shape}")


def _check_meta_shapes(x, y, g, probe_x, probe_y) -> None:
    _check_train_shapes(x, y, g)
    if probe_x.shape[0] == 0:
        raise EmptyInputError("probe batch is empty")
    if probe_y.shape[0] != probe_x.shape[0]:
        raise ShapeError(
            f"probe shapes inconsistent: x {probe_x.shape}, y {probe_y.shape}")


def _lookahead_general(model: MlpModel, momentum: MomentumState, x: Matrix,
                       y: Matrix, g: Matrix, omega_vec: np.ndarray,
                       lambda_vec: np.ndarray, alpha: float) -> np.ndarray:
    """theta' for arbitrary per-example (omega, lambda) vectors."""
    targets = lambda_vec[:, None] * y + (1.0 - lambda_vec[:, None]) * g
    grad = model.grad_weighted_loss(x, targets, omega_vec)
    step = momentum.mu * momentum.velocity + grad
    return model.params_flat() - alpha * step


def lookahead_params(model: MlpModel, momentum: MomentumState, x: Matrix,
                     y: Matrix, g: Matrix, cfg: MetaConfig) -> np.ndarray:
    """theta' at the base point (omega0 = 1/B uniform, lambda0 everywhere)."""
    _check_train_shapes(x, y, g)
    b = x.shape[0]
    omega0 = np.full(b, 1.0 / b)
    lam0 = np.full(b, cfg.lambda0)
    return _lookahead_general(model, momentum, x, y, g, omega0, lam0,
                              cfg.alpha_meta)


def _probe_loss_at(model: MlpModel, theta: np.ndarray, probe_x: Matrix,
                   probe_y: Matrix) -> float:
    probs = model.with_params(theta).forward(probe_x)
    return float(np.mean(cross_entropy_rows(probe_y, probs)))


def meta_gradients(model: MlpModel, momentum: MomentumState, x: Matrix,
                   y: Matrix, g: Matrix, probe_x: Matrix, probe_y: Matrix,
                   cfg: MetaConfig, cache=None):
    """Exact (d_omega, d_lambda) of the probe loss through the lookahead.

    ``cache`` may carry a precomputed forward pass of x at the current theta;
    the trainer reuses it for the subsequent loss evaluation.
    """
    _check_meta_shapes(x, y, g, probe_x, probe_y)
    b = x.shape[0]
    omega0 = 1.0 / b
    alpha = cfg.alpha_meta

    if cache is None:
        cache = model.forward_cache(x)
    blended = blend_labels(y, g, cfg.lambda0)
    train_grad = model.grad_weighted_loss_cached(cache, blended,
                                                 np.full(b, omega0))
    theta_prime = model.params_flat() - alpha * (
        momentum.mu * momentum.velocity + train_grad)

    # mean probe cross-entropy gradient at the lookahead point
    m = probe_x.shape[0]
    probe_model = model.with_params(theta_prime)
    gp = probe_model.grad_weighted_loss(probe_x, probe_y, np.full(m, 1.0 / m))

    # gp . grad L(t_i, Phi(x_i)) == jvp_i . (p_i - t_i)
    jvp = model.jvp_logits(cache, gp)
    d_omega = -alpha * np.sum(jvp * (cache.probs - blended), axis=1)
    d_lambda = -alpha * omega0 * np.sum(jvp * (g - y), axis=1)
    return d_omega, d_lambda


def omega_star(d_omega: np.ndarray, cfg: MetaConfig) -> np.ndarray:
    """Rectify omega0 - d_omega and renormalize onto the simplex."""
    d_omega = np.asarray(d_omega, dtype=np.float64)
    b = d_omega.shape[0]
    raw = np.maximum(1.0 / b - d_omega, 0.0)
    total = float(np.sum(raw))
    if total > cfg.eps_norm:
        return raw / total
    # every weight rectified away: fall back to uniform instead of a dead batch
    return np.full(b, 1.0 / b)


def lambda_star(d_lambda: np.ndarray, cfg: MetaConfig) -> np.ndarray:
    """1 keeps the original label, 0 switches to the pseudo label."""
    d_lambda = np.asarray(d_lambda, dtype=np.float64)
    out = np.where(d_lambda < 0.0, 1.0, 0.0)
    if cfg.zero_grad_tiebreak == "original":
        out[d_lambda == 0.0] = 1.0
    return out


def select_labels(lam_star: np.ndarray, y: Matrix, g: Matrix) -> Matrix:
    if y.shape != g.shape or lam_star.shape[0] != y.shape[0]:
        raise ShapeError(
            f"length mismatch: lambda {lam_star.shape}, y {y.shape}, g {g.shape}")
    keep = lam_star[:, None] > 0.0
    return np.where(keep, y, g)


def compute_data_coefficients(model: MlpModel, momentum: MomentumState,
                              x: Matrix, y: Matrix, g: Matrix, probe_x: Matrix,
                              probe_y: Matrix, cfg: MetaConfig,
                              cache=None) -> DataCoefficients:
    d_omega, d_lambda = meta_gradients(model, momentum, x, y, g, probe_x,
                                       probe_y, cfg, cache=cache)
    w = omega_star(d_omega, cfg)
    lam = lambda_star(d_lambda, cfg)
    y_star = select_labels(lam, y, g)
    return DataCoefficients(w, lam, y_star, d_omega, d_lambda)


def fd_meta_gradient(model: MlpModel, momentum: MomentumState, x: Matrix,
                     y: Matrix, g: Matrix, probe_x: Matrix, probe_y: Matrix,
                     cfg: MetaConfig, i: int, which: str,
                     h: float = 1e-4) -> float:
    """Central finite difference of the probe loss in coefficient i.

    Recomputes the lookahead from scratch at each perturbed point; this is the
    independent oracle the closed forms are verified against.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    if which not in ("omega", "lambda"):
        raise ValueError(f"which must be 'omega' or 'lambda', got {which!r}")
    _check_meta_shapes(x, y, g, probe_x, probe_y)
    b = x.shape[0]
    base_omega = np.full(b, 1.0 / b)
    base_lambda = np.full(b, cfg.lambda0)

    def probe_loss(delta: float) -> float:
        om = base_omega.copy()
        lm = base_lambda.copy()
        if which == "omega":
            om[i] += delta
        else:
            lm[i] += delta
        theta = _lookahead_general(model, momentum, x, y, g, om, lm,
                                   cfg.alpha_meta)
        return _probe_loss_at(model, theta, probe_x, probe_y)

    return (probe_loss(h) - probe_loss(-h)) / (2.0 * h)
