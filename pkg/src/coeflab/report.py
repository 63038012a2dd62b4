"""Figure rendering for finished runs and sweeps.

Reads the delimited outputs (metrics files, sweep tables) and writes PNG
figures plus a small summary table next to them.  Everything routes through
the Agg backend so rendering works headless.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .trainer import read_metrics

_DPI = 120


def _column(rows, name) -> np.ndarray:
    return np.array([getattr(r, name) for r in rows], dtype=np.float64)


def render_run_report(metrics_path, out_dir) -> list:
    """Loss, learning-rate, coefficient and accuracy figures for one run."""
    header, rows = read_metrics(metrics_path)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if not rows:
        raise ValueError(f"{metrics_path}: no step records to plot")
    steps = _column(rows, "step")

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, label in (("loss_reweight", "reweighted"),
                        ("loss_relabel", "relabel"),
                        ("loss_mix_probe", "mixup probe"),
                        ("loss_mix_train", "mixup train"),
                        ("loss_consistency", "consistency"),
                        ("loss_total", "total")):
        ax.plot(steps, _column(rows, name), label=label, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("loss components")
    written.append(_save(fig, out_dir, "loss_components.png"))

    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(steps, _column(rows, "lr"), linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("learning rate")
    ax.set_title("cosine warm restarts")
    written.append(_save(fig, out_dir, "learning_rate.png"))

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharex=True)
    for ax, prefix, title in ((axes[0], "omega", "loss weights"),
                              (axes[1], "lambda", "label selection")):
        ax.plot(steps, _column(rows, f"{prefix}_clean"), label="clean rows",
                linewidth=1.0)
        ax.plot(steps, _column(rows, f"{prefix}_mislabeled"),
                label="mislabeled rows", linewidth=1.0)
        ax.set_xlabel("step")
        ax.set_ylabel(f"mean {prefix}*")
        ax.set_title(title)
        ax.legend(fontsize=8)
    written.append(_save(fig, out_dir, "coefficients.png"))

    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(steps, _column(rows, "train_acc"), label="train (clean labels)",
            linewidth=1.0)
    ax.plot(steps, _column(rows, "eval_acc"), label="held-out", linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title("accuracy")
    written.append(_save(fig, out_dir, "accuracy.png"))

    written.append(_write_summary(rows, header, out_dir))
    return written


def _save(fig, out_dir, name) -> str:
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def _write_summary(rows, header, out_dir) -> str:
    last = rows[-1]
    tail = rows[-max(1, len(rows) // 5):]
    lines = ["metric,value"]
    lines.append(f"steps,{len(rows)}")
    lines.append(f"config_hash,{header.get('config_hash', '')}")
    lines.append(f"final_loss_total,{repr(float(last.loss_total))}")
    lines.append(f"final_train_acc,{repr(float(last.train_acc))}")
    lines.append(f"final_eval_acc,{repr(float(last.eval_acc))}")
    lines.append(f"min_lr,{repr(float(min(r.lr for r in rows)))}")
    for name in ("omega_clean", "omega_mislabeled", "lambda_clean",
                 "lambda_mislabeled"):
        vals = np.array([getattr(r, name) for r in tail], dtype=np.float64)
        mean = float(np.nanmean(vals)) if vals.size else float("nan")
        lines.append(f"tail_mean_{name},{repr(mean)}")
    path = os.path.join(out_dir, "report_summary.csv")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def render_sweep_report(sweep_path, out_dir) -> list:
    """Accuracy vs noise ratio, one line per variant, error bars over seeds."""
    cells = {}
    with open(sweep_path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    data_lines = [ln for ln in lines if not ln.startswith("#")]
    if not data_lines:
        raise ValueError(f"{sweep_path}: empty sweep table")
    header = data_lines[0].split(",")
    try:
        i_ratio = header.index("noise_ratio")
        i_variant = header.index("variant")
        i_mean = header.index("cell_mean")
        i_std = header.index("cell_std")
    except ValueError:
        raise ValueError(f"{sweep_path}: missing sweep columns") from None
    for ln in data_lines[1:]:
        cells_row = ln.split(",")
        key = (cells_row[i_variant], float(cells_row[i_ratio]))
        cells[key] = (float(cells_row[i_mean]), float(cells_row[i_std]))

    os.makedirs(out_dir, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    variants = sorted({k[0] for k in cells})
    for variant in variants:
        ratios = sorted(r for v, r in cells if v == variant)
        means = [cells[(variant, r)][0] for r in ratios]
        stds = [cells[(variant, r)][1] for r in ratios]
        ax.errorbar(ratios, means, yerr=stds, marker="o", capsize=3,
                    label=variant)
    ax.set_xlabel("noise ratio")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title("accuracy vs noise ratio")
    return [_save(fig, out_dir, "sweep_accuracy.png")]
