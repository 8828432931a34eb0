"""Command-line entry point: ``gaborcnn <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import dataset as dsmod
from .dataset import DatasetConfig, SplitSpec, generate_dataset, load_dataset, save_dataset, split_by_distance
from .experiment import ExperimentConfig, ResultTable, emit_report, load_config, run_experiment
from .gabor import build_bank
from .imgio import GrayImage, read_pgm, write_pgm
from .nn import load_checkpoint
from .pipeline import VARIANTS, apply_pipeline, build_pipeline
from .probe import probe_curve
from .svm import SvmConfig
from .tensorio import write_tensor


def _levels(text, standard):
    """``"3"`` takes the first three standard levels; ``"39.5,54.5"`` is an explicit list."""
    if "," not in text and "." not in text:
        n = int(text)
        if not 1 <= n <= len(standard):
            raise argparse.ArgumentTypeError(f"count must be in 1..{len(standard)}")
        return tuple(standard[:n])
    return tuple(float(v) for v in text.split(","))


def _size(text):
    if "x" in text:
        w, h = text.lower().split("x")
        return int(w), int(h)
    return int(text), int(text)


def to_pgm_range(arr):
    """Affinely map an array onto [0, 1] for debug images."""
    lo, hi = float(arr.min()), float(arr.max())
    return GrayImage((arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr))


def cmd_dataset_gen(args):
    w, h = _size(args.size)
    cfg = DatasetConfig(
        n_objects=args.objects,
        distances=_levels(args.distances, dsmod.STANDARD_DISTANCES),
        heights=_levels(args.heights, dsmod.STANDARD_HEIGHTS),
        n_angles=args.angles,
        width=w,
        height=h,
    )
    ds = generate_dataset(cfg, args.seed or 0)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} images to {args.out}")


def cmd_genbank(args):
    os.makedirs(args.out, exist_ok=True)
    variants = ["b", "c", "d"] if args.variant == "all" else [args.variant]
    for v in variants:
        bank = build_bank(v)
        with open(os.path.join(args.out, f"bank_{v}.csv"), "w") as fh:
            fh.write("index,sigma,wavelength,phase,orientation,size\n")
            for i, (p, k) in enumerate(bank):
                stem = os.path.join(args.out, f"{v}_{i:02d}")
                write_pgm(stem + ".pgm", to_pgm_range(k))
                np.savetxt(stem + ".csv", k, delimiter=",", fmt="%.17g")
                fh.write(f"{i},{p.sigma!r},{p.wavelength!r},{p.phase!r},{p.orientation!r},{k.shape[0]}\n")
    print(f"wrote banks {', '.join(variants)} to {args.out}")


def cmd_preprocess(args):
    spec = build_pipeline(args.variant)
    x = apply_pipeline(spec, read_pgm(args.input))
    os.makedirs(args.out, exist_ok=True)
    write_tensor(os.path.join(args.out, "tensor.gbtf"), x)
    if args.debug:
        for c in range(x.shape[0]):
            write_pgm(os.path.join(args.out, f"channel_{c:02d}.pgm"), to_pgm_range(x[c]))
    print(f"wrote {x.shape} tensor to {args.out}")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _dataset(args, cfg):
    if getattr(args, "dataset", None):
        return load_dataset(args.dataset)
    return generate_dataset(cfg.dataset, cfg.dataset_seed)


def cmd_train(args):
    cfg = _config(args)
    table = run_experiment(cfg, _dataset(args, cfg), checkpoint_dir=os.path.join(args.out, "checkpoints"))
    results, summary = emit_report(table, args.out)
    print(f"wrote {results} and {summary}")


def cmd_probe(args):
    cfg = _config(args)
    ds = _dataset(args, cfg)
    model = load_checkpoint(args.checkpoint)
    spec = build_pipeline(args.variant)
    train, test = split_by_distance(ds, SplitSpec.for_dataset(ds, args.train_distance))
    result = probe_curve(model, train, test, spec, model.input_size, SvmConfig())
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "probe.csv")
    result.to_csv(path)
    print(f"wrote {path} (head test accuracy {result.head_test_accuracy:.4f})")


def cmd_report(args):
    table = ResultTable.from_csv(args.results)
    _, summary = emit_report(table, args.out)
    print(f"wrote {summary}")


def build_parser():
    parser = argparse.ArgumentParser(prog="gaborcnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")

    ds = sub.add_parser("dataset", help="dataset tools")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    gen = ds_sub.add_parser("gen", help="render a synthetic turntable dataset")
    gen.add_argument("--objects", type=int, default=10)
    gen.add_argument("--distances", default="4", help="count of standard distances or comma list in cm")
    gen.add_argument("--heights", default="5", help="count of standard heights or comma list in cm")
    gen.add_argument("--angles", type=int, default=dsmod.STANDARD_ANGLES)
    gen.add_argument("--size", default="160x120", help="WxH or a single side")
    common(gen, config=False)
    gen.set_defaults(func=cmd_dataset_gen)

    gb = sub.add_parser("genbank", help="dump Gabor kernels as PGM + CSV")
    gb.add_argument("--variant", choices=["b", "c", "d", "all"], default="all")
    common(gb, config=False)
    gb.set_defaults(func=cmd_genbank)

    pre = sub.add_parser("preprocess", help="run a pipeline on one PGM")
    pre.add_argument("--variant", choices=VARIANTS, required=True)
    pre.add_argument("--input", required=True)
    pre.add_argument("--debug", action="store_true", help="also write per-channel PGMs")
    common(pre, config=False)
    pre.set_defaults(func=cmd_preprocess)

    tr = sub.add_parser("train", help="run the experiment matrix")
    tr.add_argument("--dataset", help="dataset directory (default: generate from config)")
    common(tr)
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("probe", help="per-block linear SVM probe of a MiniResNet8 checkpoint")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--variant", choices=VARIANTS, required=True)
    pr.add_argument("--train-distance", type=float, default=54.5)
    pr.add_argument("--dataset")
    common(pr)
    pr.set_defaults(func=cmd_probe)

    rep = sub.add_parser("report", help="recompute summary.csv from results.csv")
    rep.add_argument("--results", required=True)
    common(rep, config=False)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
