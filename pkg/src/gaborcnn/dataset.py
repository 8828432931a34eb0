"""Synthetic turntable dataset: rendering, persistence, distance splits and batching.

Objects are flat textured silhouettes seen by a camera at a given distance
and height while the turntable rotates them in the image plane. Apparent
size scales with ``reference_distance / distance`` so that the spatial
frequency content seen by the filters shifts with distance.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .imgio import GrayImage, crop, hflip, quantize, read_pgm, resize_bilinear, write_pgm

STANDARD_DISTANCES = (39.5, 47.0, 54.5, 62.0)
STANDARD_HEIGHTS = (10.0, 16.0, 22.0, 28.0, 34.0)
STANDARD_ANGLES = 42  # 8400 images / (10 objects * 4 distances * 5 heights)

REFERENCE_DISTANCE = 39.5
MID_HEIGHT = 22.0
# vertical shift per cm of camera height, as a fraction of image height
HEIGHT_SHIFT = 0.01
# object radius at the reference distance, as a fraction of min(W, H)
BASE_RADIUS = 0.32
BACKGROUND = 0.08
NOISE_SIGMA = 0.02
SUPERSAMPLE = 3
CROP_FRACTION = 110 / 120


class InvalidConfig(ValueError):
    pass


class TooSmall(ValueError):
    pass


class UnknownDistance(KeyError):
    pass


class CropLargerThanImage(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ViewCondition:
    object_id: int
    distance: float
    height: float
    angle: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError(f"distance must be positive, got {self.distance}")
        if not math.isfinite(self.angle):
            raise ValueError(f"angle must be finite, got {self.angle}")
        # turntable angles are periodic; store them in [0, 360)
        object.__setattr__(self, "angle", float(self.angle) % 360.0)


@dataclass(frozen=True)
class DatasetConfig:
    n_objects: int = 10
    distances: tuple = STANDARD_DISTANCES
    heights: tuple = STANDARD_HEIGHTS
    n_angles: int = STANDARD_ANGLES
    width: int = 160
    height: int = 120
    # catalogue entry rendered for each class; empty means class k uses entry k
    catalogue: tuple = ()

    def __post_init__(self):
        if self.catalogue and len(self.catalogue) != self.n_objects:
            raise InvalidConfig("catalogue must list one appearance per object")
        if self.n_objects < 1 or self.n_angles < 1 or not self.distances or not self.heights:
            raise InvalidConfig("every dataset axis needs at least one level")
        if len(set(self.distances)) != len(self.distances) or len(set(self.heights)) != len(self.heights):
            raise InvalidConfig("distances and heights must be distinct")
        if min(self.width, self.height) < 16:
            raise InvalidConfig("images must be at least 16 pixels on each side")

    @classmethod
    def desk(cls, n_objects=4, n_distances=3, n_heights=2, n_angles=24, size=48, catalogue=()):
        return cls(
            n_objects=len(catalogue) or n_objects,
            catalogue=tuple(catalogue),
            distances=STANDARD_DISTANCES[:n_distances],
            heights=STANDARD_HEIGHTS[:n_heights],
            n_angles=n_angles,
            width=size,
            height=size,
        )

    @property
    def angles(self) -> tuple:
        return tuple(360.0 * i / self.n_angles for i in range(self.n_angles))

    def conditions(self) -> list:
        return [
            ViewCondition(o, d, h, a)
            for o, d, h, a in itertools.product(
                range(self.n_objects), self.distances, self.heights, self.angles
            )
        ]

    def appearance(self, object_id: int) -> int:
        return self.catalogue[object_id] if self.catalogue else object_id

    @property
    def size(self) -> int:
        return self.n_objects * len(self.distances) * len(self.heights) * self.n_angles


# ---------------------------------------------------------------------------
# object catalogue


def _polygon_radius(phi, n):
    wedge = 2 * np.pi / n
    return np.cos(np.pi / n) / np.cos(np.mod(phi, wedge) - np.pi / n)


def _silhouette(kind, u, v, arg):
    rho = np.hypot(u, v)
    phi = np.arctan2(v, u)
    if kind == "ellipse":
        return (u / 0.95) ** 2 + (v / arg) ** 2 <= 1.0
    if kind == "polygon":
        return rho <= 0.95 * _polygon_radius(phi, arg)
    if kind == "star":
        return rho <= 0.58 + 0.37 * np.cos(arg * phi)
    if kind == "dumbbell":
        lobes = (np.hypot(u - 0.5, v) <= 0.45) | (np.hypot(u + 0.5, v) <= 0.45)
        return lobes | ((np.abs(u) <= 0.5) & (np.abs(v) <= arg))
    if kind == "cross":
        return ((np.abs(u) <= 0.9) & (np.abs(v) <= arg)) | ((np.abs(u) <= arg) & (np.abs(v) <= 0.9))
    if kind == "ring":
        return (rho <= 0.95) & (rho >= arg)
    raise ValueError(kind)


def _texture(kind, u, v, freq, orient):
    if kind == "stripes":
        return np.cos(2 * np.pi * freq * (u * math.cos(orient) + v * math.sin(orient)))
    if kind == "checker":
        return np.cos(2 * np.pi * freq * u) * np.cos(2 * np.pi * freq * v)
    if kind == "rings":
        return np.cos(2 * np.pi * freq * np.hypot(u, v))
    raise ValueError(kind)


# (silhouette, silhouette arg, texture, cycles per unit radius, texture orientation)
_CATALOGUE = (
    ("ellipse", 0.6, "stripes", 1.5, 0.0),
    ("polygon", 3, "checker", 2.0, 0.0),
    ("star", 5, "rings", 2.5, 0.0),
    ("dumbbell", 0.15, "stripes", 3.0, math.pi / 2),
    ("cross", 0.3, "rings", 1.5, 0.0),
    ("ring", 0.5, "stripes", 2.5, math.pi / 4),
    ("polygon", 6, "stripes", 1.0, math.pi / 3),
    ("star", 4, "checker", 3.0, 0.0),
    ("ellipse", 0.35, "rings", 3.5, 0.0),
    ("polygon", 4, "stripes", 3.5, 3 * math.pi / 4),
)


def object_appearance(object_id: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Intensity of object ``object_id`` in its own unit-disc frame; NaN outside."""
    shape, arg, tex, freq, orient = _CATALOGUE[object_id % len(_CATALOGUE)]
    # later cycles through the catalogue get a distinct texture scale
    freq = freq * (1.0 + 0.35 * (object_id // len(_CATALOGUE)))
    inside = _silhouette(shape, u, v, arg)
    value = 0.6 + 0.3 * _texture(tex, u, v, freq, orient)
    return np.where(inside, value, np.nan)


def _image_seed(seed: int, cond: ViewCondition) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        [
            int(seed) & 0xFFFFFFFFFFFFFFFF,
            int(cond.object_id),
            int(round(cond.distance * 1000)),
            int(round(cond.height * 1000)),
            int(round(cond.angle * 1e6)),
        ]
    )


def render_view(
    cond: ViewCondition,
    size,
    seed: int,
    *,
    noise: float = NOISE_SIGMA,
    reference_distance: float = REFERENCE_DISTANCE,
    appearance: Optional[int] = None,
) -> GrayImage:
    """Render one view. ``size`` is a side length or a ``(width, height)`` pair.

    ``appearance`` picks the catalogue entry; it defaults to ``cond.object_id``.
    """
    width, height = (size, size) if np.isscalar(size) else size
    if min(width, height) < 16:
        raise TooSmall(f"render size {width}x{height} is below 16 pixels")
    angle = cond.angle
    radius = BASE_RADIUS * min(width, height) * reference_distance / cond.distance
    cx = (width - 1) / 2
    cy = (height - 1) / 2 + (cond.height - MID_HEIGHT) * HEIGHT_SHIFT * height

    sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    ys = (np.arange(height)[:, None] + sub[None, :]).ravel()
    xs = (np.arange(width)[:, None] + sub[None, :]).ravel()
    dy, dx = np.meshgrid(ys - cy, xs - cx, indexing="ij")
    c, s = math.cos(math.radians(angle)), math.sin(math.radians(angle))
    u = (c * dx + s * dy) / radius
    v = (-s * dx + c * dy) / radius

    fine = object_appearance(cond.object_id if appearance is None else appearance, u, v)
    fine = np.where(np.isnan(fine), BACKGROUND, fine)
    img = fine.reshape(height, SUPERSAMPLE, width, SUPERSAMPLE).mean(axis=(1, 3))

    rng = np.random.default_rng(_image_seed(seed, cond))
    img = img + noise * rng.standard_normal(img.shape)
    return quantize(GrayImage(np.clip(img, 0.0, 1.0)))


# ---------------------------------------------------------------------------
# dataset container


@dataclass(frozen=True)
class Sample:
    cond: ViewCondition
    image: GrayImage

    @property
    def label(self) -> int:
        return self.cond.object_id


@dataclass
class TurntableDataset:
    images: dict
    n_objects: int
    distances: tuple
    heights: tuple
    angles: tuple

    def __post_init__(self):
        expected = set(
            ViewCondition(o, d, h, a)
            for o, d, h, a in itertools.product(
                range(self.n_objects), self.distances, self.heights, self.angles
            )
        )
        if set(self.images) != expected:
            raise InvalidConfig("images do not cover the condition grid exactly once")

    def __len__(self):
        return len(self.images)

    def samples(self) -> list:
        return [Sample(c, self.images[c]) for c in sorted(self.images)]

    @property
    def image_size(self):
        img = next(iter(self.images.values()))
        return img.width, img.height


def generate_dataset(cfg: DatasetConfig, seed: int) -> TurntableDataset:
    images = {
        c: render_view(c, (cfg.width, cfg.height), seed, appearance=cfg.appearance(c.object_id))
        for c in cfg.conditions()
    }
    return TurntableDataset(
        images, cfg.n_objects, tuple(cfg.distances), tuple(cfg.heights), cfg.angles
    )


MANIFEST = "manifest.csv"
MANIFEST_FIELDS = ("object_id", "distance", "height", "angle", "path")


def save_dataset(ds: TurntableDataset, root) -> None:
    """Write ``<root>/<object>/<distance>/<height>/<angle>.pgm`` plus ``manifest.csv``."""
    rows = []
    for cond in sorted(ds.images):
        rel = os.path.join(
            str(cond.object_id), f"{cond.distance:g}", f"{cond.height:g}", f"{cond.angle:08.4f}.pgm"
        )
        path = os.path.join(root, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        write_pgm(path, ds.images[cond])
        rows.append((cond.object_id, repr(cond.distance), repr(cond.height), repr(cond.angle), rel))
    with open(os.path.join(root, MANIFEST), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        writer.writerows(rows)


def load_dataset(root) -> TurntableDataset:
    images = {}
    with open(os.path.join(root, MANIFEST), newline="") as fh:
        for row in csv.DictReader(fh):
            cond = ViewCondition(
                int(row["object_id"]), float(row["distance"]), float(row["height"]), float(row["angle"])
            )
            images[cond] = read_pgm(os.path.join(root, row["path"]))
    if not images:
        raise EmptyDataset(f"manifest in {root} lists no images")
    conds = list(images)
    return TurntableDataset(
        images,
        n_objects=max(c.object_id for c in conds) + 1,
        distances=tuple(sorted({c.distance for c in conds})),
        heights=tuple(sorted({c.height for c in conds})),
        angles=tuple(sorted({c.angle for c in conds})),
    )


# ---------------------------------------------------------------------------
# splits, transforms, batches


@dataclass(frozen=True)
class SplitSpec:
    train_distance: float
    test_distances: tuple = field(default=())

    def __post_init__(self):
        if self.train_distance in self.test_distances:
            raise ValueError("the training distance cannot also be a test distance")

    @classmethod
    def for_dataset(cls, ds: TurntableDataset, train_distance: float) -> "SplitSpec":
        return cls(train_distance, tuple(d for d in ds.distances if d != train_distance))


def split_by_distance(ds: TurntableDataset, spec: SplitSpec):
    """Train on every view at one distance, test on every view at the others."""
    known = set(ds.distances)
    for d in (spec.train_distance,) + tuple(spec.test_distances):
        if d not in known:
            raise UnknownDistance(d)
    if set(spec.test_distances) | {spec.train_distance} != known:
        raise ValueError("split must cover every dataset distance")
    train, test = [], []
    for s in ds.samples():
        (train if s.cond.distance == spec.train_distance else test).append(s)
    if not test:
        warnings.warn("distance split has an empty test set", stacklevel=2)
    return train, test


def crop_side(width: int, height: int) -> int:
    return int(math.floor(CROP_FRACTION * min(width, height) + 0.5))


def augment_train(
    img: GrayImage,
    rng: np.random.Generator,
    net_size: int,
    *,
    flip: Optional[bool] = None,
    side: Optional[int] = None,
    offset: Optional[tuple] = None,
) -> GrayImage:
    """Random horizontal flip, random square crop, bilinear resize to ``net_size``.

    ``flip``, ``side`` and ``offset`` override the random draws.
    """
    side = crop_side(img.width, img.height) if side is None else side
    if side > min(img.width, img.height):
        raise CropLargerThanImage(f"crop side {side} exceeds {img.width}x{img.height}")
    if flip is None:
        flip = bool(rng.random() < 0.5)
    if offset is None:
        offset = (
            int(rng.integers(0, img.width - side + 1)),
            int(rng.integers(0, img.height - side + 1)),
        )
    if flip:
        img = hflip(img)
    return resize_bilinear(crop(img, offset[0], offset[1], side, side), net_size, net_size)


def eval_transform(img: GrayImage, net_size: int) -> GrayImage:
    side = min(img.width, img.height)
    x0 = (img.width - side) // 2
    y0 = (img.height - side) // 2
    return resize_bilinear(crop(img, x0, y0, side, side), net_size, net_size)


def batch_iter(
    samples: Sequence[Sample],
    batch_size: int = 64,
    rng: Optional[np.random.Generator] = None,
    transform: Optional[Callable] = None,
) -> Iterator:
    """One epoch of shuffled ``(N x C x H x W batch, labels)`` pairs.

    ``transform(image, rng)`` maps a GrayImage to a C x H x W array; by
    default the image itself is used as a single channel.
    """
    if len(samples) == 0:
        raise EmptyDataset("cannot iterate over an empty sample list")
    rng = np.random.default_rng() if rng is None else rng
    order = rng.permutation(len(samples))

    def batches():
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            xs = []
            for i in idx:
                img = samples[i].image
                xs.append(img.data[None] if transform is None else transform(img, rng))
            labels = np.array([samples[i].label for i in idx], dtype=np.int64)
            yield np.stack(xs), labels

    return batches()
