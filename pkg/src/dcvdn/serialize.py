"""Little-endian binary primitives for the versioned model files.

Layout conventions: magic bytes first, then u64 counts, length-prefixed UTF-8
strings, and float64 arrays stored as (ndim: u8, dims: u64..., raw '<f8').
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import SchemaError


def write_magic(f, magic: bytes) -> None:
    f.write(magic)


def expect_magic(f, magic: bytes) -> None:
    got = f.read(len(magic))
    if got != magic:
        raise SchemaError(f"bad magic: expected {magic!r}, got {got!r}")


def write_u64(f, x: int) -> None:
    f.write(struct.pack("<Q", int(x)))


def read_u64(f) -> int:
    return struct.unpack("<Q", f.read(8))[0]


def write_f64(f, x: float) -> None:
    f.write(struct.pack("<d", float(x)))


def read_f64(f) -> float:
    return struct.unpack("<d", f.read(8))[0]


def write_str(f, s: str) -> None:
    raw = s.encode("utf-8")
    write_u64(f, len(raw))
    f.write(raw)


def read_str(f) -> str:
    n = read_u64(f)
    return f.read(n).decode("utf-8")


def write_array(f, a: np.ndarray) -> None:
    a = np.ascontiguousarray(a, dtype="<f8")
    f.write(struct.pack("<B", a.ndim))
    for d in a.shape:
        write_u64(f, d)
    f.write(a.tobytes())


def read_array(f) -> np.ndarray:
    ndim = struct.unpack("<B", f.read(1))[0]
    shape = tuple(read_u64(f) for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(8 * count), dtype="<f8").copy()
    return data.reshape(shape)


def write_u32_array(f, a) -> None:
    a = np.ascontiguousarray(a, dtype="<u4")
    write_u64(f, a.size)
    f.write(a.tobytes())


def read_u32_array(f) -> np.ndarray:
    n = read_u64(f)
    return np.frombuffer(f.read(4 * n), dtype="<u4").copy()
