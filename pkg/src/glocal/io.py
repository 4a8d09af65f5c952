"""Bit-exact tensor files (GLT1) and binary PPM/PGM images.

GLT1 layout::

    b"GLT1" | u32 rank | rank x u32 extents | float32 payload (little-endian, row-major)
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import BadMagicError, RankError, TensorFormatError, TruncatedPayloadError
from .tensor import as_tensor

MAGIC = b"GLT1"
MAX_RANK = 4


def encode_tensor(T) -> bytes:
    arr = as_tensor(T)
    header = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + arr.astype("<f4", copy=False).tobytes(order="C")


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    if len(buf) < 8:
        raise TruncatedPayloadError("truncated header: missing rank")
    (rank,) = struct.unpack_from("<I", buf, 4)
    if rank == 0:
        raise RankError("empty shape: rank 0 tensors are not supported")
    if rank > MAX_RANK:
        raise RankError(f"rank {rank} exceeds maximum {MAX_RANK}")
    offset = 8 + 4 * rank
    if len(buf) < offset:
        raise TruncatedPayloadError("truncated header: missing extents")
    shape = struct.unpack_from(f"<{rank}I", buf, 8)
    nbytes = 4 * int(np.prod(shape, dtype=np.int64))
    have = len(buf) - offset
    if have < nbytes:
        raise TruncatedPayloadError(f"truncated payload: expected {nbytes} bytes, found {have}")
    if have > nbytes:
        raise TensorFormatError(f"trailing data: {have - nbytes} unexpected bytes after payload")
    data = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=offset)
    return data.astype(np.float32).reshape(shape)


def save_tensor(path: str | os.PathLike, T) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(T))


def load_tensor(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())


# -- PPM / PGM -----------------------------------------------------------------


def _read_netpbm(path, magic: bytes):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != magic:
        raise TensorFormatError(f"{path}: expected {magic.decode()} file, found {data[:2]!r}")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TensorFormatError(f"{path}: truncated header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte before raster
    width, height, maxval = fields
    if not 0 < maxval < 65536:
        raise TensorFormatError(f"{path}: invalid maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    channels = 3 if magic == b"P6" else 1
    count = width * height * channels
    raster = np.frombuffer(data, dtype=dtype, count=-1, offset=pos)
    if raster.size < count:
        raise TruncatedPayloadError(f"{path}: truncated raster")
    return raster[:count].reshape(height, width, channels), maxval


def _write_netpbm(path, magic: bytes, raster: np.ndarray, maxval: int):
    height, width = raster.shape[:2]
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{width} {height}\n{maxval}\n".encode())
        fh.write(raster.astype(dtype).tobytes())


def write_ppm(path, image) -> None:
    """Write a 3 x H x W image with values in [0, 1] as 8-bit P6."""
    img = as_tensor(image, "image")
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected 3 x H x W image, got {img.shape}")
    raster = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    _write_netpbm(path, b"P6", np.moveaxis(raster, 0, -1), 255)


def read_ppm(path) -> np.ndarray:
    """Read a P6 file into a 3 x H x W float32 image in [0, 1]."""
    raster, maxval = _read_netpbm(path, b"P6")
    return np.ascontiguousarray(np.moveaxis(raster, -1, 0), dtype=np.float32) / np.float32(maxval)


def write_pgm(path, labels, maxval: int) -> None:
    """Write an integer H x W map (labels or a 0/1 mask) as P5."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"expected H x W map, got {arr.shape}")
    maxval = max(int(maxval), 1)
    if arr.size and (arr.min() < 0 or arr.max() > maxval):
        raise ValueError(f"values outside [0, {maxval}]")
    _write_netpbm(path, b"P5", arr.astype(np.int64), maxval)


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a P5 file; returns the raw integer map and its maxval."""
    raster, maxval = _read_netpbm(path, b"P5")
    return np.ascontiguousarray(raster[..., 0], dtype=np.int32), maxval
