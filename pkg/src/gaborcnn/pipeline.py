"""The four preprocessing flows: standardize only, or Gabor bank + rectification + standardize."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gabor import (
    EmptyImage,
    GaborBank,
    UnknownVariant,
    apply_bank,
    build_bank,
    rectify_split,
    standardize,
)
from .dataset import eval_transform
from .imgio import GrayImage

VARIANTS = ("a", "b", "c", "d")
CHANNELS = {"a": 1, "b": 8, "c": 16, "d": 16}


@dataclass(frozen=True)
class PipelineSpec:
    variant: str
    bank: Optional[GaborBank] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UnknownVariant(f"unknown pipeline variant {self.variant!r}")
        if (self.bank is None) != (self.variant == "a"):
            raise ValueError("a Gabor bank is required for variants b-d and forbidden for a")

    @property
    def channels(self) -> int:
        return 1 if self.bank is None else 2 * len(self.bank)


def build_pipeline(variant: str) -> PipelineSpec:
    if variant not in VARIANTS:
        raise UnknownVariant(f"unknown pipeline variant {variant!r}")
    return PipelineSpec(variant, None if variant == "a" else build_bank(variant))


def _as_array(img) -> np.ndarray:
    data = img.data if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    if data.ndim != 2 or data.size == 0:
        raise EmptyImage("pipeline input must be a non-empty 2-D image")
    return data


def rectified(spec: PipelineSpec, img) -> np.ndarray:
    """Pre-standardization tap: rectified bank responses (or the raw image for variant a)."""
    data = _as_array(img)
    if spec.bank is None:
        return data[None].astype(np.float64)
    return rectify_split(apply_bank(data, spec.bank))


def apply_pipeline(spec: PipelineSpec, img) -> np.ndarray:
    """Map a grayscale image to a ``channels x H x W`` float64 network input.

    Channel order is bank order with the positive part before the negative part.
    """
    return standardize(rectified(spec, img))


def eval_inputs(samples, spec: PipelineSpec, net_size: int):
    """Centre-crop, resize and preprocess samples into an ``N x C x S x S`` batch and labels."""
    xs = np.stack([apply_pipeline(spec, eval_transform(s.image, net_size)) for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return xs, labels
