"""TNSR v1 tensor files.

Layout: one ASCII header line ``TNSR v1 <rank> <d0> <d1> ...`` followed by the
values as raw little-endian float32 in C order.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import InvalidArgumentError

MAGIC = "TNSR"
VERSION = "v1"


def to_bytes(array):
    array = np.asarray(array)
    header = " ".join([MAGIC, VERSION, str(array.ndim), *map(str, array.shape)]) + "\n"
    return header.encode("ascii") + np.ascontiguousarray(array, dtype="<f4").tobytes()


def from_bytes(blob):
    newline = blob.find(b"\n")
    if newline < 0:
        raise InvalidArgumentError("TNSR header not terminated")
    fields = blob[:newline].decode("ascii").split()
    if len(fields) < 3 or fields[0] != MAGIC or fields[1] != VERSION:
        raise InvalidArgumentError(f"not a TNSR v1 header: {blob[:newline]!r}")
    rank = int(fields[2])
    shape = tuple(int(d) for d in fields[3:])
    if len(shape) != rank:
        raise InvalidArgumentError(f"header rank {rank} but {len(shape)} extents")
    payload = blob[newline + 1:]
    count = int(np.prod(shape, dtype=np.int64))
    if len(payload) != 4 * count:
        raise InvalidArgumentError(f"expected {4 * count} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)


def save(path, array):
    """Write ``array`` (Tensor or ndarray) to ``path`` atomically."""
    if hasattr(array, "data") and not isinstance(array, np.ndarray):
        array = array.data
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(to_bytes(array))
    os.replace(tmp, path)


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
