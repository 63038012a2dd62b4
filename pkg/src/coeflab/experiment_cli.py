"""Command-line entry point: dataset generation, training, evaluation,
ablation sweeps, and figure rendering.

Config precedence is flags over config file over defaults; the resolved
configuration is echoed into every metrics file header together with its
hash, so a run is reconstructible from its outputs.  Exit codes: 0 success,
2 input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np

from . import seeding
from .model import load_checkpoint, save_checkpoint
from .noise_harness import GENERATORS, build_noisy_dataset, load_dataset, save_dataset
from .report import render_run_report, render_sweep_report
from .trainer import (NonFiniteLossError, RunConfig, config_hash, evaluate, fit,
                      write_metrics)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

# named config overrides for ablation/baseline runs
VARIANTS = {
    "full": {},
    "no-kl": {"use_kl": "false"},
    "no-mixup": {"use_mixup": "false"},
    "no-augment": {"use_augment_policy": "false"},
    "no-lambda": {"use_lambda": "false"},
    "vanilla": {"method": "vanilla"},
    "clean": {"method": "vanilla", "label_source": "clean"},
}

_CONFIG_FLAGS = [
    ("--hidden-dims", "hidden_dims", str),
    ("--activation", "activation", str),
    ("--batch-size", "batch_size", int),
    ("--probe-batch", "probe_batch", int),
    ("--epochs", "epochs", int),
    ("--eta0", "eta0", float),
    ("--cycle0", "cycle0", float),
    ("--growth", "growth", float),
    ("--restart-decay", "restart_decay", float),
    ("--eta-min", "eta_min", float),
    ("--momentum", "momentum", float),
    ("--p-weight", "p_weight", float),
    ("--k-weight", "k_weight", float),
    ("--threshold", "threshold", float),
    ("--lambda0", "lambda0", float),
    ("--tau", "tau", float),
    ("--num-augment", "num_augment", int),
    ("--tiebreak", "tiebreak", str),
    ("--jitter-sigma", "jitter_sigma", float),
    ("--scale-lo", "scale_lo", float),
    ("--scale-hi", "scale_hi", float),
    ("--cutout-span", "cutout_span", int),
    ("--seed", "seed", int),
    ("--eval-every", "eval_every", int),
    ("--method", "method", str),
    ("--label-source", "label_source", str),
]

_TOGGLE_FLAGS = [
    ("--no-kl", "use_kl"),
    ("--no-mixup", "use_mixup"),
    ("--no-augment", "use_augment_policy"),
    ("--no-lambda", "use_lambda"),
]


def _out_default(name: str) -> str:
    return os.path.join(os.environ.get("COEFLAB_OUT_DIR", "."), name)


def _add_config_flags(parser) -> None:
    group = parser.add_argument_group("run configuration")
    for flag, key, typ in _CONFIG_FLAGS:
        group.add_argument(flag, dest=f"cfg_{key}", type=typ, default=None)
    for flag, key in _TOGGLE_FLAGS:
        group.add_argument(flag, dest=f"toggle_{key}", action="store_true")
    group.add_argument("--config", default=None,
                       help="INI config file with a [run] section")


def _resolve_config_dict(args) -> dict:
    """Defaults, then config file, then explicit flags."""
    flat = RunConfig().to_flat_dict()
    if args.config is not None:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise ValueError(f"{args.config}: cannot read config file")
        if not cp.has_section("run"):
            raise ValueError(f"{args.config}: missing [run] section")
        for key, val in cp.items("run"):
            if key not in flat:
                raise ValueError(f"{args.config}: unknown config key {key!r}")
            flat[key] = val
    for _, key, _typ in _CONFIG_FLAGS:
        val = getattr(args, f"cfg_{key}")
        if val is not None:
            flat[key] = str(val)
    for _, key in _TOGGLE_FLAGS:
        if getattr(args, f"toggle_{key}"):
            flat[key] = "false"
    return flat


def _add_geometry_flags(parser, with_ratio: bool = True) -> None:
    group = parser.add_argument_group("dataset geometry")
    group.add_argument("--generator", default="blobs", choices=sorted(GENERATORS))
    group.add_argument("--classes", type=int, default=4)
    group.add_argument("--per-class", type=int, default=1010)
    group.add_argument("--dim", type=int, default=10)
    group.add_argument("--radius", type=float, default=2.5)
    group.add_argument("--sigma", type=float, default=1.0)
    group.add_argument("--probe-per-class", type=int, default=10)
    group.add_argument("--noise-kind", default="uniform",
                       choices=["uniform", "asymmetric", "none"])
    if with_ratio:
        group.add_argument("--noise-ratio", type=float, default=0.4)


# ---- subcommands ----

def cmd_gen_data(args) -> int:
    ds = build_noisy_dataset(args.generator, args.classes, args.per_class,
                             args.dim, args.radius, args.sigma, args.noise_kind,
                             args.noise_ratio, args.probe_per_class,
                             args.data_seed)
    save_dataset(ds, args.out)
    print(f"wrote {args.out}: {ds.n} train rows, "
          f"{ds.probe_features.shape[0]} probe rows, {ds.num_classes} categories")
    print(f"realized noise ratio {ds.noise_spec.realized_ratio:.4f}")
    return EXIT_OK


def _load_eval_arrays(path):
    ev = load_dataset(path)
    feats = np.concatenate([ev.features, ev.probe_features], axis=0)
    labels = np.concatenate([ev.clean_labels, ev.probe_labels])
    return feats, labels


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    flat = _resolve_config_dict(args)
    cfg = RunConfig.from_flat_dict(flat)
    eval_x = eval_y = None
    if args.eval_data is not None:
        eval_x, eval_y = _load_eval_arrays(args.eval_data)
    model, history = fit(ds, cfg, eval_x, eval_y, max_steps=args.steps)
    header = {"config_hash": config_hash(cfg)}
    header.update(cfg.to_flat_dict())
    if args.steps is not None:
        header["max_steps"] = str(args.steps)
    write_metrics(args.out_metrics, header, history)
    save_checkpoint(model, args.out_checkpoint)
    print(f"trained {len(history)} steps; wrote {args.out_metrics} "
          f"and {args.out_checkpoint}")
    if eval_x is not None and history:
        acc = evaluate(model, eval_x, eval_y)
        print(f"selected-model eval accuracy {acc:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    feats, labels = _load_eval_arrays(args.data)
    acc = evaluate(model, feats, labels)
    print(f"{acc:.4f}")
    return EXIT_OK


def _parse_list(text: str, typ):
    items = [t for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError(f"empty list argument {text!r}")
    return [typ(t) for t in items]


def cmd_sweep(args) -> int:
    ratios = _parse_list(args.ratios, float)
    seeds = _parse_list(args.seeds, int)
    variants = _parse_list(args.variants, str)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; choices: {sorted(VARIANTS)}")
    flat_base = _resolve_config_dict(args)

    test_x, test_y = GENERATORS[args.generator](
        args.classes, args.test_per_class, args.dim, args.radius, args.sigma,
        seeding.subseed(args.test_seed, seeding.TEST))

    header = [f"# generator={args.generator}", f"# classes={args.classes}",
              f"# per_class={args.per_class}", f"# dim={args.dim}",
              f"# radius={repr(args.radius)}", f"# sigma={repr(args.sigma)}",
              f"# noise_kind={args.noise_kind}",
              f"# probe_per_class={args.probe_per_class}",
              f"# test_per_class={args.test_per_class}",
              f"# test_seed={args.test_seed}"]
    header.extend(f"# cfg_{k}={v}" for k, v in flat_base.items() if k != "seed")
    rows = ["noise_ratio,variant,seed,accuracy,cell_mean,cell_std"]
    for ratio in ratios:
        for variant in variants:
            accs = []
            for seed in seeds:
                ds = build_noisy_dataset(
                    args.generator, args.classes, args.per_class, args.dim,
                    args.radius, args.sigma, args.noise_kind, ratio,
                    args.probe_per_class, seed)
                flat = dict(flat_base)
                flat.update(VARIANTS[variant])
                flat["seed"] = str(seed)
                cfg = RunConfig.from_flat_dict(flat)
                model, _ = fit(ds, cfg, test_x, test_y)
                acc = evaluate(model, test_x, test_y)
                accs.append(acc)
                print(f"ratio={ratio} variant={variant} seed={seed} "
                      f"accuracy={acc:.4f}")
            mean = float(np.mean(accs))
            std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
            for seed, acc in zip(seeds, accs):
                rows.append(f"{repr(ratio)},{variant},{seed},{repr(acc)},"
                            f"{repr(mean)},{repr(std)}")
    with open(args.out, "w") as fh:
        fh.write("\n".join(header + rows) + "\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.metrics is None and args.sweep is None:
        raise ValueError("report needs --metrics and/or --sweep")
    written = []
    if args.metrics is not None:
        written.extend(render_run_report(args.metrics, args.out_dir))
    if args.sweep is not None:
        written.extend(render_sweep_report(args.sweep, args.out_dir))
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coeflab",
        description="Noise-robust training with meta-learned data coefficients")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a noisy dataset file")
    _add_geometry_flags(p)
    p.add_argument("--seed", dest="data_seed", type=int, default=0)
    p.add_argument("--out", default=_out_default("dataset.csv"))
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data", default=None)
    p.add_argument("--steps", type=int, default=None,
                   help="cap on total training steps")
    p.add_argument("--out-metrics", default=_out_default("metrics.csv"))
    p.add_argument("--out-checkpoint", default=_out_default("model.ckpt"))
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over noise ratios, variants, seeds")
    _add_geometry_flags(p, with_ratio=False)
    p.add_argument("--ratios", default="0.2,0.4,0.8")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--variants", default="full,vanilla")
    p.add_argument("--test-per-class", type=int, default=250)
    p.add_argument("--test-seed", type=int, default=999)
    p.add_argument("--out", default=_out_default("sweep.csv"))
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render figures from metrics/sweep files")
    p.add_argument("--metrics", default=None)
    p.add_argument("--sweep", default=None)
    p.add_argument("--out-dir", default=_out_default("report"))
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
