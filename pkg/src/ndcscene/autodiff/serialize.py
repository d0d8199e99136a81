"""Tensor checkpoint segments.

Each record: name length (u32 LE), UTF-8 name, rank (u32), extents (u32
each), raw little-endian float32 payload. Records are concatenated with no
trailer; readers stop at end of buffer.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np


class SegmentFormatError(ValueError):
    pass


def write_segments(stream: BinaryIO, tensors: dict[str, np.ndarray]) -> None:
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        stream.write(struct.pack("<I", len(raw)))
        stream.write(raw)
        stream.write(struct.pack("<I", arr.ndim))
        stream.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        stream.write(arr.tobytes())


def read_segments(buf: bytes, offset: int = 0) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    view = memoryview(buf)
    n = len(buf)

    def take(count: int) -> memoryview:
        nonlocal offset
        if offset + count > n:
            raise SegmentFormatError(f"truncated tensor segment at byte {offset}")
        chunk = view[offset : offset + count]
        offset += count
        return chunk

    while offset < n:
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(take(4 * count), dtype="<f4").astype(np.float32).reshape(shape)
        if name in out:
            raise SegmentFormatError(f"duplicate tensor name {name!r}")
        out[name] = data
    return out
