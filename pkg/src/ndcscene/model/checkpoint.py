"""Model checkpoint container.

Layout: ``b"NDCS"`` | version u32 | JSON length u32 | UTF-8 JSON with the
model config and free-form metadata | tensor segments (see
``autodiff.serialize``).
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

from ..autodiff.serialize import read_segments, write_segments
from .config import ModelConfig
from .network import SscNet

MAGIC = b"NDCS"
VERSION = 1


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(model: SscNet, meta: dict | None = None) -> bytes:
    header = json.dumps({"model": model.cfg.to_dict(), "meta": meta or {}}, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(header)))
    buf.write(header)
    write_segments(buf, model.state_dict())
    return buf.getvalue()


def parse_checkpoint(buf: bytes) -> tuple[SscNet, dict]:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise CheckpointError("not an NDCS checkpoint")
    version, n = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if len(buf) < 12 + n:
        raise CheckpointError("checkpoint truncated in config block")
    header = json.loads(buf[12 : 12 + n].decode("utf-8"))
    model = SscNet(ModelConfig.from_dict(header["model"]))
    model.load_state_dict(read_segments(buf, 12 + n))
    return model, header.get("meta", {})


def save_checkpoint(path, model: SscNet, meta: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, meta))


def load_checkpoint(path) -> tuple[SscNet, dict]:
    return parse_checkpoint(Path(path).read_bytes())
