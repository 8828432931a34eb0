"""Gabor kernels, filter banks and the filtering primitives around them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ORIENTATIONS = (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)

# (sigma, wavelength, phase) rows per preprocessing variant
PARAMETER_SETS = {
    "b": ((2.201, 5.66, 0.0),),
    "c": ((2.201, 5.66, 0.0), (2.201, 5.66, math.pi / 2)),
    "d": ((3.128, 8.0, 0.0), (2.201, 5.66, math.pi / 2)),
}

STANDARDIZE_EPS = 1e-6


class UnknownVariant(ValueError):
    pass


class NonPositiveSigma(ValueError):
    pass


class NonPositiveLambda(ValueError):
    pass


class EmptyImage(ValueError):
    pass


@dataclass(frozen=True)
class GaborParams:
    sigma: float
    wavelength: float
    phase: float = 0.0
    orientation: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise NonPositiveSigma(f"sigma must be positive, got {self.sigma}")
        if not self.wavelength > 0:
            raise NonPositiveLambda(f"wavelength must be positive, got {self.wavelength}")
        if not 0.0 <= self.orientation < math.pi:
            raise ValueError(f"orientation {self.orientation} outside [0, pi)")
        if not 0.0 <= self.phase < 2 * math.pi:
            raise ValueError(f"phase {self.phase} outside [0, 2pi)")

    @property
    def radius(self) -> int:
        return math.ceil(3 * self.sigma)


def gabor_grid(p: GaborParams) -> np.ndarray:
    """Sample G(x, y) on the integer grid of radius ceil(3 sigma), no DC correction.

    Row index is y, column index is x; the centre sample is (0, 0).
    """
    r = p.radius
    y, x = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    envelope = np.exp(-(x**2 + y**2) / (2 * p.sigma**2))
    carrier = np.cos(
        (2 * math.pi / p.wavelength) * (x * math.cos(p.orientation) + y * math.sin(p.orientation))
        - p.phase
    )
    return p.amplitude * envelope * carrier


def gabor_kernel(p: GaborParams) -> np.ndarray:
    """Zero-sum Gabor kernel of odd side ``2 * ceil(3 sigma) + 1``."""
    g = gabor_grid(p)
    return g - g.mean()


@dataclass(frozen=True)
class GaborBank:
    params: tuple
    kernels: tuple

    def __len__(self):
        return len(self.kernels)

    def __iter__(self):
        return iter(zip(self.params, self.kernels))


def build_bank(variant: str) -> GaborBank:
    """Filter bank for variant ``b``, ``c`` or ``d``.

    Ordered by parameter row, then orientation ascending.
    """
    if variant not in PARAMETER_SETS:
        raise UnknownVariant(f"no Gabor bank for variant {variant!r}")
    params = tuple(
        GaborParams(sigma=s, wavelength=lam, phase=phi, orientation=theta)
        for s, lam, phi in PARAMETER_SETS[variant]
        for theta in ORIENTATIONS
    )
    kernels = []
    for p in params:
        k = gabor_kernel(p)
        k.flags.writeable = False
        kernels.append(k)
    return GaborBank(params, tuple(kernels))


def reflect_pad(img: np.ndarray, r: int) -> np.ndarray:
    # mirror without repeating the edge sample; folds periodically when r >= size
    return np.pad(img, r, mode="reflect")


def conv2d_same(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Cross-correlate a 2-D array with an odd square kernel, reflect-padded."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise EmptyImage("conv2d_same needs a non-empty 2-D image")
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise ValueError(f"kernel must be odd and square, got {k.shape}")
    r = k.shape[0] // 2
    windows = sliding_window_view(reflect_pad(img, r), k.shape)
    return np.einsum("ijkl,kl->ij", windows, k, optimize=True)


def apply_bank(img: np.ndarray, bank: GaborBank) -> np.ndarray:
    """Stack of filter responses, shape (len(bank), H, W)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise EmptyImage("apply_bank needs a non-empty 2-D image")
    out = np.empty((len(bank),) + img.shape)
    # one padded copy and window view per kernel size
    views = {}
    for i, k in enumerate(bank.kernels):
        size = k.shape[0]
        if size not in views:
            views[size] = sliding_window_view(reflect_pad(img, size // 2), k.shape)
        out[i] = np.einsum("ijkl,kl->ij", views[size], k, optimize=True)
    return out


def rectify_split(x: np.ndarray) -> np.ndarray:
    """Split each channel into (positive part, negative part), interleaved."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((2 * x.shape[0],) + x.shape[1:])
    out[0::2] = np.maximum(x, 0.0)
    out[1::2] = np.maximum(-x, 0.0)
    return out


def standardize(x: np.ndarray, eps: float = STANDARDIZE_EPS) -> np.ndarray:
    """Per-channel zero mean, unit (population) variance for a C x H x W array."""
    x = np.asarray(x, dtype=np.float64)
    axes = tuple(range(1, x.ndim))
    mean = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    return (x - mean) / np.sqrt(var + eps)
