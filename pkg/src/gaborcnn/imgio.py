"""Grayscale image container, binary PGM codec and geometric primitives.

Intensities live in [0, 1] as float64 from the moment they are decoded.
Resizing uses bilinear interpolation with half-pixel-centre alignment:
output pixel ``j`` samples source coordinate ``(j + 0.5) * in / out - 0.5``,
clamped to the valid range.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np


class ImageError(ValueError):
    pass


class MalformedHeader(ImageError):
    pass


class TruncatedData(ImageError):
    pass


class UnsupportedMaxval(ImageError):
    pass


class ZeroDimension(ImageError):
    pass


class OutOfBounds(ImageError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major grayscale image with intensities in [0, 1].

    ``data`` has shape ``(height, width)``.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("intensities must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_pgm(buf: bytes) -> GrayImage:
    """Decode a binary (P5) PGM with maxval 255."""
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise MalformedHeader("incomplete PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields
    if magic != b"P5":
        raise MalformedHeader(f"unsupported magic number {magic!r}")
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise MalformedHeader("non-integer header field") from exc
    if width < 1 or height < 1:
        raise MalformedHeader("image dimensions must be positive")
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} (only 255 is supported)")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise TruncatedData("missing raster data")
    pos += 1
    n = width * height
    raster = buf[pos : pos + n]
    if len(raster) < n:
        raise TruncatedData(f"expected {n} pixel bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels / 255.0)


def to_bytes(img: GrayImage) -> np.ndarray:
    """Quantise to 8 bits, rounding half up."""
    return np.floor(img.data * 255.0 + 0.5).astype(np.uint8)


def encode_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + to_bytes(img).tobytes()


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def write_pgm(path, img: GrayImage) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


def quantize(img: GrayImage) -> GrayImage:
    """Snap intensities to the nearest 8-bit level."""
    return GrayImage(to_bytes(img) / 255.0)


def _axis_weights(n_in: int, n_out: int):
    coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    coords = np.clip(coords, 0.0, n_in - 1)
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = coords - lo
    return lo, hi, frac


def resize_bilinear(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    if out_w < 1 or out_h < 1:
        raise ZeroDimension(f"output size {out_w}x{out_h}")
    if (out_w, out_h) == (img.width, img.height):
        return img
    x0, x1, fx = _axis_weights(img.width, out_w)
    y0, y1, fy = _axis_weights(img.height, out_h)
    d = img.data
    top = d[y0][:, x0] * (1.0 - fx) + d[y0][:, x1] * fx
    bottom = d[y1][:, x0] * (1.0 - fx) + d[y1][:, x1] * fx
    out = top * (1.0 - fy)[:, None] + bottom * fy[:, None]
    return GrayImage(np.clip(out, 0.0, 1.0))


def crop(img: GrayImage, x0: int, y0: int, w: int, h: int) -> GrayImage:
    if w < 1 or h < 1 or x0 < 0 or y0 < 0 or x0 + w > img.width or y0 + h > img.height:
        raise OutOfBounds(f"crop ({x0}, {y0}, {w}, {h}) outside {img.width}x{img.height} image")
    return GrayImage(img.data[y0 : y0 + h, x0 : x0 + w])


def hflip(img: GrayImage) -> GrayImage:
    return GrayImage(img.data[:, ::-1])
