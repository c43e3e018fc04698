"""Command-line interface.

Subcommands: ``selftest`` (oracle/invariant suites), ``train``, ``eval``,
``infer``, ``filter-demo`` (edge-aware smoothing of one image), ``ablate``
(normalization x filter-count lattice with a TSV report).  Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, config_from_pairs, load_checkpoint, save_checkpoint
from .config import ConfigError, get_float, get_int, read_config_file, reject_unknown_keys
from .data import DatasetSpec, DomainShift, generate_rds
from .filtering import filter_2d
from .imageio import FormatError, read_pnm, write_pfm, write_pnm
from .metrics import compute_metrics, evaluate
from .model import forward
from .selftest import run_selftest
from .train import TrainSettings, train_model

_DATASET_KEYS = ("count", "height", "width", "max_disparity", "shape_density",
                 "rng_seed", "channels")
_MODEL_KEYS = ("norm", "nlf_feature_layers", "nlf_cost_layers", "conv_widths",
               "agg_width", "max_disparity_model", "downsample")
_TRAIN_KEYS = ("steps", "lr", "batch_size", "train_seed")
_GRID_KEYS = ("norms", "nlf_pairs", "eval_count", "shift_brightness",
              "shift_contrast", "shift_gamma", "shift_noise",
              "conv_widths", "agg_width", "max_disparity_model", "downsample")


def _dataset_from_pairs(pairs: dict) -> DatasetSpec:
    return DatasetSpec(
        count=get_int(pairs, "count", 64),
        height=get_int(pairs, "height", 64),
        width=get_int(pairs, "width", 96),
        max_disparity=get_int(pairs, "max_disparity", 24),
        shape_density=get_float(pairs, "shape_density", 0.5),
        rng_seed=get_int(pairs, "rng_seed", 0),
        channels=get_int(pairs, "channels", 3),
    )


def _model_pairs(pairs: dict, channels: int) -> dict:
    out = {"in_channels": str(channels)}
    for key in _MODEL_KEYS:
        if key in pairs:
            out["max_disparity" if key == "max_disparity_model" else key] = pairs[key]
    return out


def _shift_from_args(args) -> DomainShift:
    gains = tuple(float(v) for v in args.shift_gains.split(",")) if args.shift_gains \
        else (1.0, 1.0, 1.0)
    return DomainShift(
        brightness=args.shift_brightness,
        contrast=args.shift_contrast,
        gamma=args.shift_gamma,
        noise_std=args.shift_noise,
        color_gains=gains,
    )


def cmd_selftest(args) -> int:
    ok = run_selftest()
    print("selftest:", "all checks passed" if ok else "FAILURES detected")
    return 0 if ok else 1


def cmd_train(args) -> int:
    pairs = read_config_file(args.config)
    reject_unknown_keys(pairs, _DATASET_KEYS + _MODEL_KEYS + _TRAIN_KEYS, "train config")
    spec = _dataset_from_pairs(pairs)
    config = config_from_pairs(_model_pairs(pairs, spec.channels))
    settings = TrainSettings(
        steps=get_int(pairs, "steps", 2000),
        lr=get_float(pairs, "lr", 3e-3),
        batch_size=get_int(pairs, "batch_size", 4),
        seed=get_int(pairs, "train_seed", 0),
    )
    print(f"generating {spec.count} stereograms ({spec.height}x{spec.width}, "
          f"max disparity {spec.max_disparity})")
    samples = generate_rds(spec)
    print(f"training {config.norm_kind} model, {config.nlf_feature_layers}+"
          f"{config.nlf_cost_layers} filter layers, {settings.steps} steps")
    model, losses = train_model(samples, config, settings,
                                log_every=max(1, settings.steps // 20))
    save_checkpoint(model, args.out)
    print(f"final loss {np.mean(losses[-20:]):.4f}; checkpoint written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    pairs = read_config_file(args.data)
    reject_unknown_keys(pairs, _DATASET_KEYS, "dataset spec")
    spec = _dataset_from_pairs(pairs)
    samples = generate_rds(spec)
    shift = _shift_from_args(args)
    metrics = evaluate(model, samples, shift=shift, shift_seed=args.shift_seed)
    tag = "shifted" if not shift.is_identity else "clean"
    print(f"{tag}: {metrics}")
    return 0


def cmd_infer(args) -> int:
    model = load_checkpoint(args.ckpt)
    left = read_pnm(args.left)
    right = read_pnm(args.right)
    if left.shape != right.shape:
        raise ValueError(f"view shapes differ: {left.shape} vs {right.shape}")
    if left.shape[1] != model.config.in_channels:
        raise ValueError(
            f"model expects {model.config.in_channels}-channel input, image has {left.shape[1]}"
        )
    disp, _ = forward(left, right, model, training=False)
    write_pfm(args.out, disp[0])
    print(f"disparity written to {args.out} "
          f"(range [{disp.min():.2f}, {disp.max():.2f}] px)")
    return 0


def cmd_filter_demo(args) -> int:
    image = read_pnm(args.input)[0]
    out = image.copy()
    for _ in range(args.iterations):
        out = filter_2d(out, out)
    write_pnm(args.out, np.clip(out, 0.0, 1.0))
    print(f"filtered image written to {args.out} ({args.iterations} pass(es))")
    return 0


def cmd_ablate(args) -> int:
    pairs = read_config_file(args.grid)
    reject_unknown_keys(pairs, _GRID_KEYS + _DATASET_KEYS + _TRAIN_KEYS, "ablation grid")
    spec = _dataset_from_pairs(pairs)
    norms = [v.strip() for v in pairs.get("norms", "batch,domain").split(",")]
    nlf_pairs = []
    for item in pairs.get("nlf_pairs", "0:0,2:1").split(","):
        feats, costs = item.strip().split(":")
        nlf_pairs.append((int(feats), int(costs)))
    settings = TrainSettings(
        steps=get_int(pairs, "steps", 400),
        lr=get_float(pairs, "lr", 3e-3),
        batch_size=get_int(pairs, "batch_size", 4),
        seed=get_int(pairs, "train_seed", 0),
    )
    shift = DomainShift(
        brightness=get_float(pairs, "shift_brightness", 0.15),
        contrast=get_float(pairs, "shift_contrast", 1.4),
        gamma=get_float(pairs, "shift_gamma", 1.3),
        noise_std=get_float(pairs, "shift_noise", 0.03),
    )
    train_samples = generate_rds(spec)
    eval_spec = DatasetSpec(
        count=get_int(pairs, "eval_count", 16), height=spec.height, width=spec.width,
        max_disparity=spec.max_disparity, shape_density=spec.shape_density,
        rng_seed=spec.rng_seed + 77777, channels=spec.channels)
    eval_samples = generate_rds(eval_spec)

    rows = ["norm\tnlf_feature\tnlf_cost\tclean_2px\tshift_2px\tclean_epe\tshift_epe"]
    print(rows[0])
    for norm in norms:
        for feats, costs in nlf_pairs:
            config = config_from_pairs({
                **_model_pairs(pairs, spec.channels),
                "norm": norm,
                "nlf_feature_layers": str(feats),
                "nlf_cost_layers": str(costs),
            })
            model, _ = train_model(train_samples, config, settings)
            clean = evaluate(model, eval_samples)
            shifted = evaluate(model, eval_samples, shift=shift)
            row = (f"{norm}\t{feats}\t{costs}\t{clean.px2:.2f}\t{shifted.px2:.2f}"
                   f"\t{clean.epe:.3f}\t{shifted.epe:.3f}")
            rows.append(row)
            print(row)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
        print(f"table written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlstereo",
        description="Stereo matching with domain-normalized features and "
                    "non-local graph filtering.",
    )
    parser.add_argument("--version", action="version", version=f"nlstereo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("selftest", help="run the oracle and invariant suites")

    p_train = sub.add_parser("train", help="train on synthetic stereograms")
    p_train.add_argument("--config", required=True, help="key = value config file")
    p_train.add_argument("--out", required=True, help="checkpoint output path")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset spec")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--data", required=True, help="dataset spec config file")
    p_eval.add_argument("--shift-brightness", type=float, default=0.0)
    p_eval.add_argument("--shift-contrast", type=float, default=1.0)
    p_eval.add_argument("--shift-gamma", type=float, default=1.0)
    p_eval.add_argument("--shift-noise", type=float, default=0.0)
    p_eval.add_argument("--shift-gains", default="", help="r,g,b gains")
    p_eval.add_argument("--shift-seed", type=int, default=0)

    p_infer = sub.add_parser("infer", help="predict disparity for one stereo pair")
    p_infer.add_argument("--ckpt", required=True)
    p_infer.add_argument("--left", required=True, help="left view (PGM/PPM)")
    p_infer.add_argument("--right", required=True, help="right view (PGM/PPM)")
    p_infer.add_argument("--out", required=True, help="output disparity (PFM)")

    p_demo = sub.add_parser("filter-demo",
                            help="apply the self-guided filter to an image")
    p_demo.add_argument("--in", dest="input", required=True, help="input PGM/PPM")
    p_demo.add_argument("--out", required=True, help="output PGM/PPM")
    p_demo.add_argument("--iterations", type=int, default=1)

    p_abl = sub.add_parser("ablate", help="run the normalization x filter lattice")
    p_abl.add_argument("--grid", required=True, help="grid config file")
    p_abl.add_argument("--out", default="", help="optional TSV output path")
    return parser


_HANDLERS = {
    "selftest": cmd_selftest,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "filter-demo": cmd_filter_demo,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError,) as exc:
        print(f"nlstereo: config error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, FormatError, OSError, ValueError) as exc:
        print(f"nlstereo: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
