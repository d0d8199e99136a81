"""Binary label-grid (VXGD) and image (IMGF) files.

VXGD, little-endian::

    b"VXGD" | version u32 = 1 | dims 3 x u32 (X, Y, Z) | class count u32
    | X*Y*Z label bytes, x fastest | unknown mask, 1 bit per voxel, same order,
      packed least-significant bit first

IMGF::

    b"IMGF" | C, H, W as u32 | C*H*W float32, planar
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GRID_MAGIC = b"VXGD"
GRID_VERSION = 1
IMAGE_MAGIC = b"IMGF"
_GRID_HEADER = struct.Struct("<4sI3II")
_IMAGE_HEADER = struct.Struct("<4s3I")


class FormatError(ValueError):
    pass


@dataclass
class LabelGrid:
    """Voxel labels ``(X, Y, Z)`` in ``0 .. num_classes - 1`` plus an unknown mask."""

    labels: np.ndarray
    unknown: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.unknown = np.asarray(self.unknown, dtype=bool)
        if self.labels.ndim != 3 or self.unknown.shape != self.labels.shape:
            raise ValueError(f"labels {self.labels.shape} and unknown mask {self.unknown.shape} must be equal 3D shapes")
        if self.num_classes < 1 or self.num_classes > 256:
            raise ValueError(f"class count {self.num_classes} out of range")
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise ValueError(f"label {int(self.labels.max())} exceeds class count {self.num_classes}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.labels.shape)

    @property
    def known(self) -> np.ndarray:
        return ~self.unknown


def grid_bytes(grid: LabelGrid) -> bytes:
    X, Y, Z = grid.dims
    header = _GRID_HEADER.pack(GRID_MAGIC, GRID_VERSION, X, Y, Z, grid.num_classes)
    labels = np.ascontiguousarray(grid.labels.transpose(2, 1, 0)).tobytes()
    mask = np.packbits(np.ascontiguousarray(grid.unknown.transpose(2, 1, 0)).reshape(-1), bitorder="little").tobytes()
    return header + labels + mask


def parse_grid(buf: bytes) -> LabelGrid:
    if len(buf) < _GRID_HEADER.size:
        raise FormatError("grid file truncated in header")
    magic, version, X, Y, Z, ncls = _GRID_HEADER.unpack_from(buf, 0)
    if magic != GRID_MAGIC:
        raise FormatError(f"bad grid magic {magic!r}")
    if version != GRID_VERSION:
        raise FormatError(f"unsupported grid version {version}")
    n = X * Y * Z
    need = _GRID_HEADER.size + n + (n + 7) // 8
    if len(buf) < need:
        raise FormatError(f"grid file truncated: {len(buf)} bytes, need {need}")
    if len(buf) > need:
        raise FormatError(f"grid file has {len(buf) - need} trailing bytes")
    off = _GRID_HEADER.size
    labels = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off).reshape(Z, Y, X).transpose(2, 1, 0)
    if n and int(labels.max()) >= ncls:
        raise FormatError(f"label {int(labels.max())} overflows class count {ncls}")
    bits = np.frombuffer(buf, dtype=np.uint8, offset=off + n)
    unknown = np.unpackbits(bits, count=n, bitorder="little").astype(bool).reshape(Z, Y, X).transpose(2, 1, 0)
    return LabelGrid(labels.copy(), unknown.copy(), ncls)


def write_grid(path, grid: LabelGrid) -> None:
    Path(path).write_bytes(grid_bytes(grid))


def read_grid(path) -> LabelGrid:
    return parse_grid(Path(path).read_bytes())


def image_bytes(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError(f"image must be (C, H, W), got {image.shape}")
    return _IMAGE_HEADER.pack(IMAGE_MAGIC, *image.shape) + np.ascontiguousarray(image, dtype="<f4").tobytes()


def parse_image(buf: bytes) -> np.ndarray:
    if len(buf) < _IMAGE_HEADER.size:
        raise FormatError("image file truncated in header")
    magic, C, H, W = _IMAGE_HEADER.unpack_from(buf, 0)
    if magic != IMAGE_MAGIC:
        raise FormatError(f"bad image magic {magic!r}")
    need = _IMAGE_HEADER.size + 4 * C * H * W
    if len(buf) != need:
        raise FormatError(f"image file has {len(buf)} bytes, expected {need}")
    return np.frombuffer(buf, dtype="<f4", offset=_IMAGE_HEADER.size).reshape(C, H, W).astype(np.float32)


def write_image(path, image: np.ndarray) -> None:
    Path(path).write_bytes(image_bytes(image))


def read_image(path) -> np.ndarray:
    return parse_image(Path(path).read_bytes())
