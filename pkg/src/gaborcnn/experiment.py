"""Experiment matrix: architectures x variants x training distances x trials."""

from __future__ import annotations

import csv
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dataset import (
    STANDARD_DISTANCES,
    DatasetConfig,
    Sample,
    SplitSpec,
    TurntableDataset,
    augment_train,
    batch_iter,
    generate_dataset,
    split_by_distance,
)
from .nn import ARCHITECTURES, ModelGraph, build_model, loss_softmax_ce, save_checkpoint
from .optim import OptimConfig, OptimState, lr_at, sgd_nesterov_step
from .pipeline import VARIANTS, PipelineSpec, apply_pipeline, build_pipeline, eval_inputs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    dataset_seed: int = 0
    variants: tuple = VARIANTS
    architectures: tuple = ("MiniResNet8", "MiniCNN")
    train_distances: tuple = STANDARD_DISTANCES
    trials: int = 5
    optim: OptimConfig = field(default_factory=OptimConfig)
    batch_size: int = 64
    net_size: int = 224
    seed: int = 0

    def __post_init__(self):
        if not self.variants or not self.architectures or not self.train_distances:
            raise ValueError("variants, architectures and train_distances must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        bad = set(self.variants) - set(VARIANTS)
        if bad:
            raise ValueError(f"unknown variants {sorted(bad)}")
        bad = set(self.architectures) - set(ARCHITECTURES)
        if bad:
            raise ValueError(f"unknown architectures {sorted(bad)}")


def _pick(section, cls):
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from ``[dataset]``, ``[optim]`` and ``[experiment]`` sections."""
    ds_raw = dict(raw.get("dataset", {}))
    dataset_seed = ds_raw.pop("seed", 0)
    opt_raw = dict(raw.get("optim", {}))
    batch_size = opt_raw.pop("batch_size", 64)
    exp_raw = _pick(raw.get("experiment", {}), ExperimentConfig)
    return ExperimentConfig(
        dataset=DatasetConfig(**_pick(ds_raw, DatasetConfig)),
        dataset_seed=dataset_seed,
        optim=OptimConfig(**_pick(opt_raw, OptimConfig)),
        batch_size=batch_size,
        **exp_raw,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh))


# ---------------------------------------------------------------------------
# training


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def accuracy(model: ModelGraph, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(model.predict(x) == y))


def train_model(
    model: ModelGraph,
    samples,
    spec: PipelineSpec,
    net_size: int,
    optim: OptimConfig,
    batch_size: int,
    rng: np.random.Generator,
):
    """Train in place for ``optim.total_epochs``; returns per-epoch stats."""

    def transform(img, r):
        return apply_pipeline(spec, augment_train(img, r, net_size))

    params = [p for _, p, _ in model.parameters()]
    grads = [g for _, _, g in model.parameters()]
    state = OptimState(params)
    history = []
    for epoch in range(optim.total_epochs):
        t0 = time.perf_counter()
        lr = lr_at(epoch, optim)
        total_loss, correct, seen = 0.0, 0, 0
        for x, y in batch_iter(samples, batch_size, rng, transform):
            model.zero_grad()
            logits = model.forward(x, train=True)
            loss, g = loss_softmax_ce(logits.astype(np.float64), y)
            model.backward(g.astype(logits.dtype))
            sgd_nesterov_step(params, grads, state, lr, optim)
            total_loss += loss * len(y)
            correct += int((logits.argmax(axis=1) == y).sum())
            seen += len(y)
        history.append(
            {
                "epoch": epoch,
                "lr": lr,
                "loss": total_loss / seen,
                "running_acc": correct / seen,
                "seconds": time.perf_counter() - t0,
            }
        )
        log.debug("epoch %d lr %.3g loss %.4f acc %.3f", epoch, lr, total_loss / seen, correct / seen)
    return history


@dataclass(frozen=True)
class ResultRow:
    architecture: str
    variant: str
    train_distance: float
    trial: int
    train_acc: float
    test_acc: float
    epoch_seconds: float
    error: str = ""


RESULT_FIELDS = [f.name for f in fields(ResultRow)]


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RESULT_FIELDS)
            for r in self.rows:
                w.writerow(
                    [r.architecture, r.variant, repr(r.train_distance), r.trial,
                     repr(r.train_acc), repr(r.test_acc), f"{r.epoch_seconds:.6f}", r.error]
                )

    @classmethod
    def from_csv(cls, path) -> "ResultTable":
        rows = []
        with open(path, newline="") as fh:
            for d in csv.DictReader(fh):
                rows.append(
                    ResultRow(
                        d["architecture"], d["variant"], float(d["train_distance"]), int(d["trial"]),
                        float(d["train_acc"]), float(d["test_acc"]), float(d["epoch_seconds"]), d["error"],
                    )
                )
        return cls(rows)


def run_cell(
    cfg: ExperimentConfig,
    ds: TurntableDataset,
    arch: str,
    variant: str,
    distance: float,
    trial: int,
    checkpoint_dir: Optional[str] = None,
) -> ResultRow:
    spec = build_pipeline(variant)
    train, test = split_by_distance(ds, SplitSpec.for_dataset(ds, distance))
    model = build_model(arch, spec.channels, ds.n_objects, _seed(cfg.seed, trial), input_size=cfg.net_size)
    rng = np.random.default_rng(_seed(cfg.seed, trial, 1))
    history = train_model(model, train, spec, cfg.net_size, cfg.optim, cfg.batch_size, rng)
    x_tr, y_tr = eval_inputs(train, spec, cfg.net_size)
    train_acc = accuracy(model, x_tr, y_tr)
    if test:
        x_te, y_te = eval_inputs(test, spec, cfg.net_size)
        test_acc = accuracy(model, x_te, y_te)
    else:
        test_acc = float("nan")
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)
        save_checkpoint(model, os.path.join(checkpoint_dir, f"{arch}_{variant}_{distance:g}_t{trial}.gbnn"))
    epoch_seconds = float(np.mean([h["seconds"] for h in history]))
    return ResultRow(arch, variant, float(distance), trial, train_acc, test_acc, epoch_seconds)


def run_experiment(
    cfg: ExperimentConfig,
    dataset: Optional[TurntableDataset] = None,
    checkpoint_dir: Optional[str] = None,
) -> ResultTable:
    """Run every (architecture, variant, distance, trial) cell.

    A cell that raises is recorded with NaN accuracies and the error text.
    """
    ds = dataset if dataset is not None else generate_dataset(cfg.dataset, cfg.dataset_seed)
    table = ResultTable()
    for arch in cfg.architectures:
        for variant in cfg.variants:
            for distance in cfg.train_distances:
                for trial in range(cfg.trials):
                    try:
                        row = run_cell(cfg, ds, arch, variant, distance, trial, checkpoint_dir)
                    except Exception as exc:  # a failed cell must not sink the matrix
                        log.exception("cell %s/%s/%g/%d failed", arch, variant, distance, trial)
                        row = ResultRow(arch, variant, float(distance), trial, math.nan, math.nan, math.nan,
                                        f"{type(exc).__name__}: {exc}")
                    log.info("%s %s %g trial %d: train %.4f test %.4f", arch, variant, distance, trial,
                             row.train_acc, row.test_acc)
                    table.rows.append(row)
    return table


# ---------------------------------------------------------------------------
# reports

SUMMARY_FIELDS = ["architecture", "variant", "train_distance", "n_trials", "mean_train_acc", "mean_test_acc"]


def _nanmean(values):
    values = [v for v in values if not math.isnan(v)]
    return sum(values) / len(values) if values else math.nan


def summarize(table: ResultTable) -> list:
    """Per (arch, variant, distance) means over trials, then an ``average`` row per (arch, variant)."""
    groups = {}
    for r in table.rows:
        groups.setdefault((r.architecture, r.variant), {}).setdefault(r.train_distance, []).append(r)
    out = []
    for (arch, variant), by_dist in groups.items():
        means = []
        for dist, rows in by_dist.items():
            ok = [r for r in rows if not r.error]
            tr = _nanmean([r.train_acc for r in ok])
            te = _nanmean([r.test_acc for r in ok])
            means.append((tr, te))
            out.append([arch, variant, repr(dist), len(ok), repr(tr), repr(te)])
        out.append(
            [arch, variant, "average", len(means),
             repr(_nanmean([m[0] for m in means])), repr(_nanmean([m[1] for m in means]))]
        )
    return out


def emit_report(table: ResultTable, outdir) -> tuple:
    """Write ``results.csv`` and ``summary.csv`` into ``outdir``; returns their paths."""
    if not table.rows:
        raise ValueError("cannot report an empty result table")
    os.makedirs(outdir, exist_ok=True)
    results = os.path.join(outdir, "results.csv")
    summary = os.path.join(outdir, "summary.csv")
    table.to_csv(results)
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        w.writerows(summarize(table))
    return results, summary


def samples_at(ds: TurntableDataset, distance: float) -> list:
    return [s for s in ds.samples() if s.cond.distance == distance]


__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "ResultTable",
    "Sample",
    "accuracy",
    "config_from_dict",
    "emit_report",
    "load_config",
    "run_cell",
    "run_experiment",
    "summarize",
    "train_model",
]
