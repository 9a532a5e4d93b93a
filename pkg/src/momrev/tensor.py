"""Dense tensor arithmetic and the MRT1 on-disk format.

Tensors are plain numpy arrays (row-major, channels-first for images).
float64 is the verification default; float32 is used for training speed.
This module adds the shape-checked operations the rest of the code relies
on, plus serialization. No broadcasting beyond scalars, no views.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError, ShapeError

Tensor = np.ndarray

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_MAGIC = b"MRT1"


def check_finite(a: Tensor, context: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {context}")
    return a


def _check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, np.ndarray) and b.ndim > 0:
        _check_same_shape(a, b)
    return a + b


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, np.ndarray) and b.ndim > 0:
        _check_same_shape(a, b)
    return a - b


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, np.ndarray) and b.ndim > 0:
        _check_same_shape(a, b)
    return a * b


def scale(a: Tensor, s: float) -> Tensor:
    return a * s


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.shape} x {b.shape}")
    return a @ b


def conv2d_output_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int):
    """Output spatial extents; raises if they are not positive integers."""
    num_h = h + 2 * padding - kh
    num_w = w + 2 * padding - kw
    if num_h < 0 or num_w < 0 or num_h % stride or num_w % stride:
        raise ShapeError(
            f"conv2d: invalid geometry H={h} W={w} k=({kh},{kw}) "
            f"stride={stride} pad={padding}"
        )
    return num_h // stride + 1, num_w // stride + 1


def conv2d(inp: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate a C_in x H x W input with C_out x C_in x kH x kW kernels."""
    if inp.ndim != 3 or kernels.ndim != 4:
        raise ShapeError("conv2d expects CxHxW input and OxCxkHxkW kernels")
    c_in, h, w = inp.shape
    c_out, kc, kh, kw = kernels.shape
    if kc != c_in:
        raise ShapeError(f"conv2d channel mismatch: input {c_in}, kernels {kc}")
    out = conv2d_batched(inp[None], kernels, stride, padding)
    return out[0]


def conv2d_batched(inp: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Batched cross-correlation, B x C_in x H x W -> B x C_out x H' x W'.

    Accumulates one strided tensordot per kernel offset; fast enough at
    desk scale and easy to differentiate (see layers.Conv2d.backward).
    """
    b, c_in, h, w = inp.shape
    c_out, kc, kh, kw = kernels.shape
    if kc != c_in:
        raise ShapeError(f"conv2d channel mismatch: input {c_in}, kernels {kc}")
    oh, ow = conv2d_output_hw(h, w, kh, kw, stride, padding)
    if padding:
        xp = np.pad(inp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = inp
    out = np.zeros((b, c_out, oh, ow), dtype=inp.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
            # (b,c_in,oh,ow) x (c_out,c_in) -> (b,oh,ow,c_out)
            out += np.tensordot(patch, kernels[:, :, i, j], axes=([1], [1])).transpose(
                0, 3, 1, 2
            )
    return out


def save_mrt1(path, a: Tensor) -> None:
    """Write one tensor in the MRT1 binary format."""
    dt = np.dtype(a.dtype)
    if dt not in _DTYPE_CODES:
        raise ShapeError(f"MRT1 supports float32/float64, got {dt}")
    with open(path, "wb") as fh:
        fh.write(serialize_mrt1(a))


def serialize_mrt1(a: Tensor) -> bytes:
    dt = np.dtype(a.dtype)
    code = _DTYPE_CODES[dt]
    header = _MAGIC + struct.pack("<BB", code, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    return header + np.ascontiguousarray(a).astype(dt.newbyteorder("<")).tobytes()


def deserialize_mrt1(buf: bytes, offset: int = 0):
    """Parse one MRT1 tensor; returns (array, bytes consumed)."""
    if buf[offset : offset + 4] != _MAGIC:
        raise DataError("bad MRT1 magic")
    code, rank = struct.unpack_from("<BB", buf, offset + 4)
    if code not in _CODE_DTYPES:
        raise DataError(f"unknown MRT1 dtype code {code}")
    shape = struct.unpack_from(f"<{rank}I", buf, offset + 6)
    dt = _CODE_DTYPES[code]
    start = offset + 6 + 4 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    nbytes = count * dt.itemsize
    data = np.frombuffer(buf[start : start + nbytes], dtype=dt)
    if data.size != count:
        raise DataError("truncated MRT1 payload")
    return data.reshape(shape).astype(dt.newbyteorder("=")), start + nbytes - offset


def load_mrt1(path) -> Tensor:
    buf = Path(path).read_bytes()
    arr, consumed = deserialize_mrt1(buf)
    if consumed != len(buf):
        raise DataError(f"trailing bytes in {path}")
    return arr
