"""Multilayer perceptron classifier with hand-derived backpropagation.

The parameter vector is the concatenation of per-layer blocks in the fixed
order W0, b0, W1, b1, ... with each W stored row-major as (fan_in, fan_out).
That order is a contract: gradients, momentum velocity, checkpoints and the
meta lookahead all index into it.

Besides the usual reverse-mode gradients the model exposes
``per_example_gradients`` (one gradient row per batch row) and ``jvp_logits``
(forward-mode directional derivative of the logits along a flat parameter
direction).  The JVP is what keeps the meta step cheap: a probe-gradient dot
product against B per-example gradients collapses to a single extra forward
pass.
"""

from __future__ import annotations

import numpy as np

from . import seeding
from .tensor_core import Matrix, ShapeError, row_softmax

_ACTIVATIONS = ("relu", "tanh")


class ForwardCache:
    """Intermediate tensors of one forward pass, consumed by backprop/JVP."""

    def __init__(self, x: Matrix, pre: list, act: list, probs: Matrix):
        self.x = x          # input batch (B, d)
        self.pre = pre      # pre-activations z_l per layer, last one = logits
        self.act = act      # post-activation outputs of hidden layers
        self.probs = probs  # row_softmax(logits)


class MlpModel:
    def __init__(self, layer_dims, weights, biases, activation: str = "relu"):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.layer_dims = [int(d) for d in layer_dims]
        if len(self.layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        self.weights = weights
        self.biases = biases
        self.activation = activation
        self._check_blocks()
        # flat-vector block offsets, fixed order W0, b0, W1, b1, ...
        self._offsets = []
        pos = 0
        for w, b in zip(self.weights, self.biases):
            self._offsets.append((pos, pos + w.size))
            pos += w.size
            self._offsets.append((pos, pos + b.size))
            pos += b.size
        self.n_params = pos

    def _check_blocks(self) -> None:
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ShapeError("block count does not match layer_dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l], dims[l + 1]):
                raise ShapeError(
                    f"layer {l}: weight shape {w.shape} != {(dims[l], dims[l + 1])}")
            if b.shape != (dims[l + 1],):
                raise ShapeError(f"layer {l}: bias shape {b.shape}")

    @classmethod
    def init(cls, layer_dims, seed: int, activation: str = "relu") -> "MlpModel":
        """Glorot-uniform weights, zero biases, deterministic per seed."""
        rng = seeding.rng_for(seed, seeding.INIT)
        weights, biases = [], []
        dims = [int(d) for d in layer_dims]
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(dims, weights, biases, activation)

    # ---- parameter vector view ----

    def params_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} params, got {theta.shape}")
        blocks = self._split_flat(theta)
        for l in range(len(self.weights)):
            self.weights[l] = blocks[2 * l].copy()
            self.biases[l] = blocks[2 * l + 1].copy()

    def _split_flat(self, v: np.ndarray) -> list:
        """Views of a flat vector shaped like the weight/bias blocks."""
        out = []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            ws, we = self._offsets[2 * l]
            bs, be = self._offsets[2 * l + 1]
            out.append(v[ws:we].reshape(w.shape))
            out.append(v[bs:be])
        return out

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def with_params(self, theta: np.ndarray) -> "MlpModel":
        m = self.copy()
        m.set_params_flat(theta)
        return m

    # ---- forward ----

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _act_grad(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return (z > 0.0).astype(np.float64)
        t = np.tanh(z)
        return 1.0 - t * t

    def forward_cache(self, x: Matrix) -> ForwardCache:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.layer_dims[0]:
            raise ShapeError(
                f"input shape {x.shape} incompatible with input dim {self.layer_dims[0]}")
        pre, act = [], []
        a = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            if l < last:
                a = self._act(z)
                act.append(a)
        probs = row_softmax(pre[-1])
        return ForwardCache(x, pre, act, probs)

    def forward(self, x: Matrix) -> Matrix:
        return self.forward_cache(x).probs

    def logits(self, x: Matrix) -> Matrix:
        return self.forward_cache(x).pre[-1]

    def predict(self, x: Matrix) -> np.ndarray:
        """Argmax category per row; ties resolve to the lowest index."""
        return np.argmax(self.forward(x), axis=1)

    # ---- reverse mode ----

    def grad_from_dlogits(self, cache: ForwardCache, dlogits: np.ndarray) -> np.ndarray:
        """Backprop dL/dlogits down to a flat parameter gradient."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        dz = np.asarray(dlogits, dtype=np.float64)
        if dz.shape != cache.pre[-1].shape:
            raise ShapeError(f"dlogits shape {dz.shape} != {cache.pre[-1].shape}")
        for l in range(len(self.weights) - 1, -1, -1):
            a_prev = cache.x if l == 0 else cache.act[l - 1]
            grads_w[l] = a_prev.T @ dz
            grads_b[l] = np.sum(dz, axis=0)
            if l > 0:
                da = dz @ self.weights[l].T
                dz = da * self._act_grad(cache.pre[l - 1])
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb)
        return np.concatenate(parts)

    def grad_weighted_loss_cached(self, cache: ForwardCache, targets: Matrix,
                                  weights: np.ndarray) -> np.ndarray:
        targets = np.asarray(targets, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if targets.shape != cache.probs.shape:
            raise ShapeError(f"targets shape {targets.shape} != {cache.probs.shape}")
        if weights.shape != (targets.shape[0],):
            raise ShapeError(f"weights shape {weights.shape} != ({targets.shape[0]},)")
        # softmax cross-entropy: dL_i/dlogits_i = omega_i * (p_i - t_i)
        dlogits = weights[:, None] * (cache.probs - targets)
        return self.grad_from_dlogits(cache, dlogits)

    def grad_weighted_loss(self, x: Matrix, targets: Matrix,
                           weights: np.ndarray) -> np.ndarray:
        """Gradient of sum_i weights_i * soft_cross_entropy(targets_i, forward(x)_i)."""
        return self.grad_weighted_loss_cached(self.forward_cache(x), targets, weights)

    def per_example_gradients(self, x: Matrix, targets: Matrix) -> np.ndarray:
        """Row i is the flat gradient of soft_cross_entropy(targets_i, p_i).

        Equivalent to grad_weighted_loss with an indicator weight on row i.
        Materializes (B, n_params); meant for small batches and oracles, the
        training hot path uses jvp_logits instead.
        """
        cache = self.forward_cache(x)
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != cache.probs.shape:
            raise ShapeError(f"targets shape {targets.shape} != {cache.probs.shape}")
        B = x.shape[0]
        dz = cache.probs - targets
        cols_w = [np.empty((B, 0))] * len(self.weights)
        cols_b = [np.empty((B, 0))] * len(self.biases)
        for l in range(len(self.weights) - 1, -1, -1):
            a_prev = cache.x if l == 0 else cache.act[l - 1]
            cols_w[l] = np.einsum("bi,bo->bio", a_prev, dz).reshape(B, -1)
            cols_b[l] = dz
            if l > 0:
                da = dz @ self.weights[l].T
                dz = da * self._act_grad(cache.pre[l - 1])
        parts = []
        for gw, gb in zip(cols_w, cols_b):
            parts.append(gw)
            parts.append(gb)
        return np.concatenate(parts, axis=1)

    # ---- forward mode ----

    def jvp_logits(self, cache: ForwardCache, tangent: np.ndarray) -> np.ndarray:
        """d(logits)/dtheta applied to a flat direction, shape (B, C).

        Row i dotted with (p_i - t_i) equals tangent . grad of
        soft_cross_entropy(t_i, p_i), which is how the meta step turns B
        per-example dot products into one forward-mode sweep.
        """
        tangent = np.asarray(tangent, dtype=np.float64)
        if tangent.shape != (self.n_params,):
            raise ShapeError(f"tangent length {tangent.shape} != ({self.n_params},)")
        blocks = self._split_flat(tangent)
        da = np.zeros_like(cache.x)
        last = len(self.weights) - 1
        for l in range(len(self.weights)):
            a_prev = cache.x if l == 0 else cache.act[l - 1]
            dw, db = blocks[2 * l], blocks[2 * l + 1]
            dz = da @ self.weights[l] + a_prev @ dw + db
            if l < last:
                da = dz * self._act_grad(cache.pre[l])
        return dz


class MomentumState:
    """Heavy-ball velocity aligned with the flat parameter vector."""

    def __init__(self, velocity: np.ndarray, mu: float = 0.9):
        if not 0.0 <= mu < 1.0:
            raise ValueError(f"momentum coefficient must be in [0,1), got {mu}")
        self.velocity = np.asarray(velocity, dtype=np.float64)
        self.mu = float(mu)

    @classmethod
    def zeros(cls, model: MlpModel, mu: float = 0.9) -> "MomentumState":
        return cls(np.zeros(model.n_params), mu)

    def copy(self) -> "MomentumState":
        return MomentumState(self.velocity.copy(), self.mu)


def sgd_momentum_step(model: MlpModel, state: MomentumState, grad: np.ndarray,
                      lr: float):
    """v <- mu*v + g; theta <- theta - lr*v.  Mutates and returns both."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.velocity.shape:
        raise ShapeError(f"gradient length {grad.shape} != {state.velocity.shape}")
    state.velocity = state.mu * state.velocity + grad
    model.set_params_flat(model.params_flat() - lr * state.velocity)
    return model, state


# ---- checkpoint file ----

_CKPT_MAGIC = "coeflab-checkpoint v1"


def save_checkpoint(model: MlpModel, path) -> None:
    """Text checkpoint, values as float.hex() for bit-exact round-trips."""
    lines = [_CKPT_MAGIC,
             "layer_dims " + " ".join(str(d) for d in model.layer_dims),
             f"activation {model.activation}"]
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"W{l} {w.shape[0]} {w.shape[1]}")
        for row in w:
            lines.append(" ".join(v.hex() for v in row))
        lines.append(f"b{l} {b.shape[0]}")
        lines.append(" ".join(v.hex() for v in b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> MlpModel:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a {_CKPT_MAGIC!r} file")
    if not lines[1].startswith("layer_dims "):
        raise ValueError(f"{path}: missing layer_dims header")
    dims = [int(t) for t in lines[1].split()[1:]]
    if not lines[2].startswith("activation "):
        raise ValueError(f"{path}: missing activation header")
    activation = lines[2].split()[1]
    pos = 3
    weights, biases = [], []
    for l, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        head = lines[pos].split()
        if head != [f"W{l}", str(fan_in), str(fan_out)]:
            raise ValueError(f"{path}: line {pos + 1}: expected W{l} {fan_in} {fan_out}")
        pos += 1
        rows = []
        for _ in range(fan_in):
            rows.append([float.fromhex(t) for t in lines[pos].split()])
            pos += 1
        w = np.array(rows, dtype=np.float64)
        if w.shape != (fan_in, fan_out):
            raise ValueError(f"{path}: W{l} block has shape {w.shape}")
        head = lines[pos].split()
        if head != [f"b{l}", str(fan_out)]:
            raise ValueError(f"{path}: line {pos + 1}: expected b{l} {fan_out}")
        pos += 1
        b = np.array([float.fromhex(t) for t in lines[pos].split()], dtype=np.float64)
        pos += 1
        if b.shape != (fan_out,):
            raise ValueError(f"{path}: b{l} block has shape {b.shape}")
        weights.append(w)
        biases.append(b)
    return MlpModel(dims, weights, biases, activation)
