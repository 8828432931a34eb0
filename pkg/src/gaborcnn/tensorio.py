"""GBTF tensor interchange files.

Layout: ``b"GBTF"`` | u32 version | u32 rank | u64 dims[rank] | float32
payload, all little-endian, row-major.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"GBTF"
VERSION = 1


class TensorFormatError(ValueError):
    pass


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    head = MAGIC + struct.pack("<II", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise TensorFormatError("not a GBTF tensor")
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported GBTF version {version}")
    pos = 12
    if len(buf) < pos + 8 * rank:
        raise TensorFormatError("truncated dimension list")
    shape = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    if len(buf) - pos != 4 * count:
        raise TensorFormatError(f"payload holds {len(buf) - pos} bytes, expected {4 * count}")
    return np.frombuffer(buf, dtype="<f4", offset=pos).reshape(shape).astype(np.float32)


def write_tensor(path, arr) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())
