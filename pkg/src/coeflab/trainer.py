"""End-to-end training orchestration.

One training step: augment the batch, estimate pseudo labels, run the meta
step for per-example weights and label selections, split by weight, build the
probe-joined mixup pool, assemble the total loss

    L_reweight + L_relabel + L_mix_probe + p * L_mix_train + k * L_consistency

and take one momentum-SGD step at the scheduled learning rate.  Pseudo labels
and meta coefficients are constants during the weight update; gradients reach
the parameters only through the model predictions inside each loss term,
including both prediction arguments of the consistency KL.

Also here: the cosine warm-restart schedule, the run configuration record,
per-step reports with forward/backward cost counters (in full-batch
equivalents, batch size B = one unit), and the metrics file format.
"""

from __future__ import annotations

import hashlib
import numpy as np

from . import seeding
from .augment import AugmentPolicy
from .batch_builder import (build_joint_batch, mixup_batch, mixup_loss_split,
                            split_by_weight)
from .losses import cross_entropy_rows, kl_grad_dlogits, sharpen_rows
from .meta_coefficients import MetaConfig, blend_labels, compute_data_coefficients
from .model import MlpModel, MomentumState, sgd_momentum_step
from .noise_harness import NoisyDataset, one_hot
from .pseudo_labeler import augmented_copies
from .tensor_core import EmptyInputError, Matrix


class NonFiniteLossError(RuntimeError):
    """Raised when a step produces a NaN or infinite total loss."""


# ---- learning-rate schedule ----

class LrSchedule:
    def __init__(self, eta0: float, cycle0: float = 1.0, growth: float = 1.5,
                 restart_decay: float = 0.9, eta_min: float = 0.0):
        if eta0 <= 0:
            raise ValueError(f"eta0 must be positive, got {eta0}")
        if growth <= 1.0:
            raise ValueError(f"cycle growth must exceed 1, got {growth}")
        if not 0.0 < restart_decay <= 1.0:
            raise ValueError(f"restart_decay must be in (0,1], got {restart_decay}")
        self.eta0 = float(eta0)
        self.cycle0 = float(cycle0)
        self.growth = float(growth)
        self.restart_decay = float(restart_decay)
        self.eta_min = float(eta_min)

    def cycle_length(self, n: int) -> float:
        return self.cycle0 * self.growth ** n

    def cycle_peak(self, n: int) -> float:
        return self.eta0 * self.restart_decay ** n


def lr_at(schedule: LrSchedule, fractional_epoch: float) -> float:
    """Cosine decay within growing cycles, peak decaying at each restart."""
    if fractional_epoch < 0:
        raise ValueError(f"fractional_epoch must be >= 0, got {fractional_epoch}")
    start, n = 0.0, 0
    length = schedule.cycle_length(0)
    while fractional_epoch >= start + length:
        start += length
        n += 1
        length = schedule.cycle_length(n)
    s = (fractional_epoch - start) / length
    peak = schedule.cycle_peak(n)
    return schedule.eta_min + 0.5 * (peak - schedule.eta_min) * (1.0 + np.cos(np.pi * s))


# ---- run configuration ----

_BOOL_KEYS = ("use_kl", "use_mixup", "use_augment_policy", "use_lambda")
_INT_KEYS = ("batch_size", "probe_batch", "epochs", "num_augment", "cutout_span",
             "seed", "eval_every")
_FLOAT_KEYS = ("eta0", "cycle0", "growth", "restart_decay", "eta_min", "momentum",
               "p_weight", "k_weight", "threshold", "lambda0", "tau",
               "jitter_sigma", "scale_lo", "scale_hi")
_STR_KEYS = ("hidden_dims", "activation", "tiebreak", "method", "label_source")


class RunConfig:
    """All knobs of a training run; flat-serializable for provenance."""

    def __init__(self, **kw):
        self.hidden_dims = kw.pop("hidden_dims", "64,64")
        self.activation = kw.pop("activation", "relu")
        self.batch_size = int(kw.pop("batch_size", 50))
        self.probe_batch = int(kw.pop("probe_batch", 40))
        self.epochs = int(kw.pop("epochs", 50))
        self.eta0 = float(kw.pop("eta0", 0.05))
        self.cycle0 = float(kw.pop("cycle0", 1.0))
        self.growth = float(kw.pop("growth", 1.5))
        self.restart_decay = float(kw.pop("restart_decay", 0.9))
        self.eta_min = float(kw.pop("eta_min", 0.0))
        self.momentum = float(kw.pop("momentum", 0.9))
        self.p_weight = float(kw.pop("p_weight", 5.0))
        self.k_weight = float(kw.pop("k_weight", 20.0))
        self.threshold = float(kw.pop("threshold", 1.0))
        self.lambda0 = float(kw.pop("lambda0", 0.9))
        self.tau = float(kw.pop("tau", 0.5))
        self.num_augment = int(kw.pop("num_augment", 2))
        self.tiebreak = kw.pop("tiebreak", "original")
        self.jitter_sigma = float(kw.pop("jitter_sigma", 0.3))
        self.scale_lo = float(kw.pop("scale_lo", 0.9))
        self.scale_hi = float(kw.pop("scale_hi", 1.1))
        self.cutout_span = int(kw.pop("cutout_span", 0))
        self.seed = int(kw.pop("seed", 0))
        self.eval_every = int(kw.pop("eval_every", 25))
        self.use_kl = bool(kw.pop("use_kl", True))
        self.use_mixup = bool(kw.pop("use_mixup", True))
        self.use_augment_policy = bool(kw.pop("use_augment_policy", True))
        self.use_lambda = bool(kw.pop("use_lambda", True))
        self.method = kw.pop("method", "meta")
        self.label_source = kw.pop("label_source", "noisy")
        if kw:
            raise ValueError(f"unknown config keys: {sorted(kw)}")
        self.validate()

    def validate(self) -> None:
        if self.p_weight < 0 or self.k_weight < 0:
            raise ValueError("loss weights p and k must be >= 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0,1], got {self.threshold}")
        if self.batch_size < 1 or self.probe_batch < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.method not in ("meta", "vanilla"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.label_source not in ("noisy", "clean"):
            raise ValueError(f"unknown label_source {self.label_source!r}")
        if self.num_augment < 1:
            raise ValueError("num_augment must be >= 1")

    def hidden_dim_list(self) -> list:
        text = self.hidden_dims.strip()
        return [int(t) for t in text.split(",")] if text else []

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.eta0, self.cycle0, self.growth,
                          self.restart_decay, self.eta_min)

    def policy(self) -> AugmentPolicy:
        if not self.use_augment_policy:
            return AugmentPolicy(0.0, (1.0, 1.0), 0)
        return AugmentPolicy(self.jitter_sigma, (self.scale_lo, self.scale_hi),
                             self.cutout_span)

    def meta_config(self, lr: float) -> MetaConfig:
        lam0 = self.lambda0 if self.use_lambda else 1.0
        return MetaConfig(lr, lam0, zero_grad_tiebreak=self.tiebreak)

    def to_flat_dict(self) -> dict:
        out = {}
        for key in (_STR_KEYS + _INT_KEYS + _FLOAT_KEYS + _BOOL_KEYS):
            val = getattr(self, key)
            if isinstance(val, bool):
                out[key] = "true" if val else "false"
            elif isinstance(val, float):
                out[key] = repr(val)
            else:
                out[key] = str(val)
        return out

    @classmethod
    def from_flat_dict(cls, flat: dict) -> "RunConfig":
        kw = {}
        for key, raw in flat.items():
            if key in _BOOL_KEYS:
                if raw.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(f"config key {key}: not a boolean: {raw!r}")
                kw[key] = raw.lower() in ("true", "1")
            elif key in _INT_KEYS:
                kw[key] = int(raw)
            elif key in _FLOAT_KEYS:
                kw[key] = float(raw)
            elif key in _STR_KEYS:
                kw[key] = raw
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**kw)


def config_hash(cfg: RunConfig) -> str:
    text = "\n".join(f"{k}={v}" for k, v in cfg.to_flat_dict().items())
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---- step reports and the metrics file ----

METRIC_COLUMNS = (
    "step", "lr", "loss_reweight", "loss_relabel", "loss_mix_probe",
    "loss_mix_train", "loss_consistency", "loss_total", "omega_clean",
    "omega_mislabeled", "lambda_clean", "lambda_mislabeled", "train_acc",
    "eval_acc", "forward_equiv", "backward_equiv")


class StepReport:
    def __init__(self, **kw):
        for col in METRIC_COLUMNS:
            setattr(self, col, kw.pop(col))
        if kw:
            raise ValueError(f"unknown report fields: {sorted(kw)}")

    def row(self) -> str:
        cells = [str(int(self.step))]
        for col in METRIC_COLUMNS[1:]:
            cells.append(repr(float(getattr(self, col))))
        return ",".join(cells)


def write_metrics(path, header_pairs: dict, reports) -> None:
    """Comma-separated metrics, config echoed as '# key=value' lines on top."""
    lines = [f"# {k}={v}" for k, v in header_pairs.items()]
    lines.append(",".join(METRIC_COLUMNS))
    lines.extend(r.row() for r in reports)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_metrics(path):
    header, rows = {}, []
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    i = 0
    while i < len(lines) and lines[i].startswith("# "):
        key, _, val = lines[i][2:].partition("=")
        header[key] = val
        i += 1
    if i >= len(lines) or lines[i].split(",") != list(METRIC_COLUMNS):
        raise ValueError(f"{path}: line {i + 1}: bad metrics header")
    for ln_no, ln in enumerate(lines[i + 1:], start=i + 2):
        if not ln:
            continue
        cells = ln.split(",")
        if len(cells) != len(METRIC_COLUMNS):
            raise ValueError(f"{path}: line {ln_no}: expected {len(METRIC_COLUMNS)} fields")
        kw = {"step": int(cells[0])}
        for col, cell in zip(METRIC_COLUMNS[1:], cells[1:]):
            kw[col] = float(cell)
        rows.append(StepReport(**kw))
    return header, rows


class _Counters:
    """Forward/backward work in full-batch equivalents (B rows = 1 unit)."""

    def __init__(self, batch_rows: int):
        self.unit = float(batch_rows)
        self.forward_rows = 0.0
        self.backward_rows = 0.0

    def fwd(self, rows: int) -> None:
        self.forward_rows += rows

    def bwd(self, rows: int) -> None:
        self.backward_rows += rows

    @property
    def forward_equiv(self) -> float:
        return self.forward_rows / self.unit

    @property
    def backward_equiv(self) -> float:
        return self.backward_rows / self.unit


def _masked_means(values: np.ndarray, mislabeled: np.ndarray):
    clean = values[~mislabeled]
    bad = values[mislabeled]
    m_clean = float(np.mean(clean)) if clean.size else float("nan")
    m_bad = float(np.mean(bad)) if bad.size else float("nan")
    return m_clean, m_bad


# ---- the training step ----

def train_step(model: MlpModel, momentum: MomentumState, x: Matrix, y: Matrix,
               probe_x: Matrix, probe_y: Matrix, cfg: RunConfig, step: int,
               steps_per_epoch: int = 1, mislabeled_mask=None):
    """One full update; returns (model, momentum, StepReport).

    y and probe_y are one-hot label matrices.  mislabeled_mask flags batch
    rows whose noisy label differs from the hidden clean one; it only feeds
    the report, never the update.
    """
    b = x.shape[0]
    if mislabeled_mask is None:
        mislabeled_mask = np.zeros(b, dtype=bool)
    lr = lr_at(cfg.schedule(), step / float(steps_per_epoch))
    counters = _Counters(b)

    if cfg.method == "vanilla":
        cache = model.forward_cache(x)
        counters.fwd(b)
        ce = cross_entropy_rows(y, cache.probs)
        loss_reweight = float(np.mean(ce))
        grad = model.grad_weighted_loss_cached(cache, y, np.full(b, 1.0 / b))
        counters.bwd(b)
        total = loss_reweight
        if not np.isfinite(total):
            raise NonFiniteLossError(f"step {step}: non-finite loss {total}")
        sgd_momentum_step(model, momentum, grad, lr)
        nan = float("nan")
        report = StepReport(
            step=step, lr=lr, loss_reweight=loss_reweight, loss_relabel=0.0,
            loss_mix_probe=0.0, loss_mix_train=0.0, loss_consistency=0.0,
            loss_total=total, omega_clean=nan, omega_mislabeled=nan,
            lambda_clean=nan, lambda_mislabeled=nan, train_acc=nan,
            eval_acc=nan, forward_equiv=counters.forward_equiv,
            backward_equiv=counters.backward_equiv)
        return model, momentum, report

    if probe_x.shape[0] == 0:
        raise EmptyInputError("probe batch is empty")
    policy = cfg.policy()
    k_aug = cfg.num_augment

    # step 1: augmented copies of the train batch
    aug_seed = seeding.subseed(cfg.seed, seeding.AUGMENT, step)
    copies = augmented_copies(x, policy, k_aug, aug_seed)
    x_hat = copies[0] if copies else x

    # step 2: pseudo labels from averaged predictions (constants downstream)
    cache = model.forward_cache(x)
    counters.fwd(b)
    hat_cache = model.forward_cache(x_hat)
    counters.fwd(b)
    total_pr = cache.probs + hat_cache.probs
    for extra in copies[1:]:
        total_pr = total_pr + model.forward(extra)
        counters.fwd(b)
    g = sharpen_rows(total_pr / float(k_aug), cfg.tau)

    # step 3: meta coefficients through the one-step lookahead
    meta_cfg = cfg.meta_config(lr)
    coeffs = compute_data_coefficients(model, momentum, x, y, g, probe_x,
                                       probe_y, meta_cfg, cache=cache)
    m_rows = probe_x.shape[0]
    counters.fwd(m_rows)   # probe forward at the lookahead point
    counters.bwd(m_rows)   # probe gradient
    counters.bwd(b)        # lookahead training gradient
    counters.fwd(b)        # forward-mode sweep for the dot products
    if not cfg.use_lambda:
        coeffs.lambda_star = np.ones(b)
        coeffs.y_star = y

    # step 4: weight split
    split = split_by_weight(coeffs.omega_star, cfg.threshold)

    # step 5: joint pool and mixup; the ablation removes both mixup losses,
    # leaving the probe batch to act through the meta step only
    mix = mix_cache = None
    if cfg.use_mixup:
        joint = build_joint_batch(probe_x, probe_y, x, y, x_hat, g, split)
        mix = mixup_batch(joint, seeding.subseed(cfg.seed, seeding.MIXUP, step))
        mix_cache = model.forward_cache(mix.mixed_features)
        counters.fwd(len(mix))

    # step 6: loss components
    blended = blend_labels(y, g, meta_cfg.lambda0)
    ce_blend = cross_entropy_rows(blended, cache.probs)
    loss_reweight = float(np.sum(coeffs.omega_star * ce_blend))
    dlogits_x = coeffs.omega_star[:, None] * (cache.probs - blended)

    if cfg.use_lambda:
        ce_star = cross_entropy_rows(coeffs.y_star, cache.probs)
        loss_relabel = float(np.mean(ce_star))
        dlogits_x = dlogits_x + (cache.probs - coeffs.y_star) / b
    else:
        loss_relabel = 0.0

    if cfg.use_kl:
        kl_rows, dzp, dzq = kl_grad_dlogits(cache.probs, hat_cache.probs)
        loss_consistency = float(np.mean(kl_rows))
        dlogits_x = dlogits_x + (cfg.k_weight / b) * dzp
        dlogits_hat = (cfg.k_weight / b) * dzq
    else:
        loss_consistency = 0.0
        dlogits_hat = None

    if cfg.use_mixup:
        ce_mix = cross_entropy_rows(mix.mixed_labels, mix_cache.probs)
        loss_mix_probe, loss_mix_train = mixup_loss_split(
            ce_mix, mix.anchor_is_probe)
        n_probe_rows = int(np.sum(mix.anchor_is_probe))
        n_other_rows = len(mix) - n_probe_rows
        mix_weights = np.zeros(len(mix))
        if n_probe_rows:
            mix_weights[mix.anchor_is_probe] = 1.0 / n_probe_rows
        if n_other_rows:
            mix_weights[~mix.anchor_is_probe] = cfg.p_weight / n_other_rows
    else:
        loss_mix_probe = loss_mix_train = 0.0

    total = (loss_reweight + loss_relabel + loss_mix_probe
             + cfg.p_weight * loss_mix_train + cfg.k_weight * loss_consistency)
    if not np.isfinite(total):
        raise NonFiniteLossError(
            f"step {step}: non-finite total loss {total} "
            f"(reweight={loss_reweight}, relabel={loss_relabel}, "
            f"mix_probe={loss_mix_probe}, mix_train={loss_mix_train}, "
            f"kl={loss_consistency})")

    # step 7: assemble the gradient and update
    grad = model.grad_from_dlogits(cache, dlogits_x)
    counters.bwd(b)
    if dlogits_hat is not None:
        grad = grad + model.grad_from_dlogits(hat_cache, dlogits_hat)
        counters.bwd(b)
    if cfg.use_mixup:
        grad = grad + model.grad_from_dlogits(
            mix_cache,
            mix_weights[:, None] * (mix_cache.probs - mix.mixed_labels))
        counters.bwd(len(mix))
    sgd_momentum_step(model, momentum, grad, lr)

    omega_clean, omega_bad = _masked_means(coeffs.omega_star, mislabeled_mask)
    lambda_clean, lambda_bad = _masked_means(coeffs.lambda_star, mislabeled_mask)
    nan = float("nan")
    report = StepReport(
        step=step, lr=lr, loss_reweight=loss_reweight, loss_relabel=loss_relabel,
        loss_mix_probe=loss_mix_probe, loss_mix_train=loss_mix_train,
        loss_consistency=loss_consistency, loss_total=total,
        omega_clean=omega_clean, omega_mislabeled=omega_bad,
        lambda_clean=lambda_clean, lambda_mislabeled=lambda_bad,
        train_acc=nan, eval_acc=nan, forward_equiv=counters.forward_equiv,
        backward_equiv=counters.backward_equiv)
    return model, momentum, report


# ---- the training loop ----

def evaluate(model: MlpModel, features: Matrix, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax prediction hits the label."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        raise EmptyInputError("cannot evaluate on an empty set")
    preds = model.predict(features)
    return float(np.mean(preds == np.asarray(labels, dtype=np.int64)))


def fit(dataset: NoisyDataset, cfg: RunConfig, eval_x: Matrix = None,
        eval_y=None, max_steps: int = None):
    """Train over shuffled epochs; returns (selected model, report history).

    The returned model is the parameter snapshot taken right after the update
    whose scheduled learning rate was lowest (latest such step on ties), per
    the lowest-learning-rate selection rule.  max_steps caps the total step
    count below the epoch budget when given.
    """
    num_classes = dataset.num_classes
    dims = [dataset.dim] + cfg.hidden_dim_list() + [num_classes]
    model = MlpModel.init(dims, cfg.seed, cfg.activation)
    momentum = MomentumState.zeros(model, cfg.momentum)

    labels = (dataset.clean_labels if cfg.label_source == "clean"
              else dataset.noisy_labels)
    y_all = one_hot(labels, num_classes)
    mislabeled_all = dataset.noisy_labels != dataset.clean_labels
    if cfg.label_source == "clean":
        mislabeled_all = np.zeros(dataset.n, dtype=bool)
    probe_y_all = one_hot(dataset.probe_labels, num_classes)
    m_total = dataset.probe_features.shape[0]

    steps_per_epoch = dataset.n // cfg.batch_size
    if cfg.epochs > 0 and steps_per_epoch == 0:
        raise ValueError(
            f"batch size {cfg.batch_size} exceeds dataset size {dataset.n}")

    best_lr = float("inf")
    best_params = model.params_flat()
    history = []
    last_train_acc = float("nan")
    last_eval_acc = float("nan")
    step = 0
    for epoch in range(cfg.epochs):
        perm = seeding.rng_for(cfg.seed, seeding.SHUFFLE, epoch).permutation(dataset.n)
        for bi in range(steps_per_epoch):
            if max_steps is not None and step >= max_steps:
                return model.with_params(best_params), history
            rows = perm[bi * cfg.batch_size:(bi + 1) * cfg.batch_size]
            if cfg.method == "meta":
                probe_rows = _sample_probe_rows(cfg, m_total, step)
                probe_x = dataset.probe_features[probe_rows]
                probe_y = probe_y_all[probe_rows]
            else:
                probe_x = dataset.probe_features[:0]
                probe_y = probe_y_all[:0]
            model, momentum, report = train_step(
                model, momentum, dataset.features[rows], y_all[rows], probe_x,
                probe_y, cfg, step, steps_per_epoch=steps_per_epoch,
                mislabeled_mask=mislabeled_all[rows])
            if (step + 1) % cfg.eval_every == 0 or step == 0:
                last_train_acc = evaluate(model, dataset.features,
                                          dataset.clean_labels)
                if eval_x is not None:
                    last_eval_acc = evaluate(model, eval_x, eval_y)
            report.train_acc = last_train_acc
            report.eval_acc = last_eval_acc
            history.append(report)
            if report.lr <= best_lr:
                best_lr = report.lr
                best_params = model.params_flat()
            step += 1
    return model.with_params(best_params), history


def _sample_probe_rows(cfg: RunConfig, m_total: int, step: int) -> np.ndarray:
    if m_total == 0:
        raise EmptyInputError("dataset has no probe rows")
    if cfg.probe_batch == m_total:
        return np.arange(m_total)
    rng = seeding.rng_for(cfg.seed, seeding.PROBE, step)
    if cfg.probe_batch < m_total:
        return np.sort(rng.choice(m_total, size=cfg.probe_batch, replace=False))
    # tiny probe sets are reused with replacement to fill the batch
    return rng.choice(m_total, size=cfg.probe_batch, replace=True)
