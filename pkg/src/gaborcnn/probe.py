"""Linear-SVM probes on the output of each residual block."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .nn import ModelGraph
from .pipeline import PipelineSpec, eval_inputs
from .svm import SvmConfig, svm_fit, svm_predict


class BadBlockIndex(IndexError):
    pass


@dataclass(frozen=True)
class ProbeRow:
    block_index: int
    feature_dim: int
    train_accuracy: float
    test_accuracy: float


@dataclass
class ProbeResult:
    rows: list
    head_test_accuracy: float = float("nan")

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["block_index", "feature_dim", "train_acc", "test_acc"])
            for r in self.rows:
                w.writerow([r.block_index, r.feature_dim, repr(r.train_accuracy), repr(r.test_accuracy)])


def _pooled_features(model: ModelGraph, x: np.ndarray, blocks, batch_size: int):
    """Global-average-pooled tap activations for every block in ``blocks``, plus logits."""
    feats = {b: [] for b in blocks}
    logits = []
    for i in range(0, len(x), batch_size):
        out, taps = model.forward(x[i : i + batch_size], train=False, taps=blocks)
        logits.append(out)
        for b in blocks:
            a = taps[b]
            feats[b].append(a.mean(axis=(2, 3)) if a.ndim == 4 else a)
    return {b: np.concatenate(v).astype(np.float64) for b, v in feats.items()}, np.concatenate(logits)


def extract_features(
    model: ModelGraph, samples, block: int, spec: PipelineSpec, net_size: int, batch_size: int = 64
) -> np.ndarray:
    """``N x C_block`` feature matrix: eval transform, pipeline, forward to the tap, GAP."""
    if not 1 <= block <= len(model.block_taps):
        raise BadBlockIndex(f"block {block} outside 1..{len(model.block_taps)}")
    x, _ = eval_inputs(samples, spec, net_size)
    return _pooled_features(model, x, [block], batch_size)[0][block]


def probe_curve(
    model: ModelGraph,
    train_samples,
    test_samples,
    spec: PipelineSpec,
    net_size: int,
    cfg: SvmConfig = SvmConfig(),
    batch_size: int = 64,
) -> ProbeResult:
    """Fit one SVM per block on training features; score it on the test split."""
    if not train_samples or not test_samples:
        raise ValueError("probe needs non-empty train and test splits")
    blocks = list(range(1, len(model.block_taps) + 1))
    if not blocks:
        raise BadBlockIndex("model exposes no block taps")
    x_tr, y_tr = eval_inputs(train_samples, spec, net_size)
    x_te, y_te = eval_inputs(test_samples, spec, net_size)
    f_tr, _ = _pooled_features(model, x_tr, blocks, batch_size)
    f_te, logits_te = _pooled_features(model, x_te, blocks, batch_size)
    rows = []
    for b in blocks:
        m = svm_fit(f_tr[b], y_tr, cfg)
        rows.append(
            ProbeRow(
                b,
                f_tr[b].shape[1],
                float(np.mean(svm_predict(m, f_tr[b]) == y_tr)),
                float(np.mean(svm_predict(m, f_te[b]) == y_te)),
            )
        )
    head = float(np.mean(logits_te.argmax(axis=1) == y_te))
    return ProbeResult(rows, head)
