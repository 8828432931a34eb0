"""Gabor-filter preprocessing for small CNNs, with a numpy training engine and layer probes."""

from .dataset import (
    DatasetConfig,
    SplitSpec,
    TurntableDataset,
    ViewCondition,
    augment_train,
    eval_transform,
    generate_dataset,
    render_view,
    split_by_distance,
)
from .gabor import GaborParams, build_bank, conv2d_same, gabor_kernel, rectify_split, standardize
from .imgio import GrayImage, decode_pgm, encode_pgm
from .nn import build_model, loss_softmax_ce
from .optim import OptimConfig, lr_at, sgd_nesterov_step
from .pipeline import apply_pipeline, build_pipeline
from .probe import extract_features, probe_curve
from .svm import SvmConfig, svm_fit, svm_predict

__version__ = "0.1.0"
