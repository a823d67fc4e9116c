"""Binary checkpoint format.

Little-endian layout::

    b"HDPM" | u32 version | u32 len + kind (utf-8) | u32 n_records
    n_records x ( u32 len + name | u32 rank | rank x u32 dim | f32 data )
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"HDPM"
VERSION = 1
KINDS = ("stage1", "denoiser", "denoiser-ema")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointKindError(CheckpointError):
    pass


class CheckpointNameCollisionError(CheckpointError):
    pass


def encode_checkpoint(params: dict, kind: str) -> bytes:
    if kind not in KINDS:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    parts = [MAGIC, struct.pack("<I", VERSION)]
    k = kind.encode()
    parts += [struct.pack("<I", len(k)), k, struct.pack("<I", len(params))]
    for name, arr in params.items():
        nb = name.encode()
        arr = np.asarray(arr)
        parts += [struct.pack("<I", len(nb)), nb, struct.pack("<I", arr.ndim)]
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(f"{self.path}: truncated while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def decode_checkpoint(data: bytes, path="<bytes>"):
    """Return (kind, params) from checkpoint bytes."""
    r = _Reader(data, path)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: unsupported checkpoint version {version}")
    kind = r.take(r.u32("kind length"), "kind").decode("utf-8", "replace")
    if kind not in KINDS:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    params = {}
    for i in range(r.u32("record count")):
        label = f"record {i}"
        name = r.take(r.u32(f"{label} name length"), f"{label} name").decode()
        label = f"record {i} ({name!r})"
        if name in params:
            raise CheckpointNameCollisionError(f"{path}: duplicate tensor name {name!r}")
        rank = r.u32(f"{label} rank")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"{label} dims"))
        count = int(np.prod(dims)) if rank else 1
        raw = r.take(4 * count, f"{label} data")
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - r.pos} trailing bytes")
    return kind, params


def save_checkpoint(params: dict, path, kind: str):
    """Atomically write ``params`` (stored as float32) to ``path``."""
    data = encode_checkpoint(params, kind)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name, suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path, kind: str | tuple | None = None) -> dict:
    """Load tensors; if ``kind`` is given the stored kind must match (or be one of them)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"{path}: {e.strerror}") from None
    stored, params = decode_checkpoint(data, path)
    wanted = (kind,) if isinstance(kind, str) else kind
    if wanted is not None and stored not in wanted:
        raise CheckpointKindError(f"{path}: checkpoint holds {stored!r}, expected {' or '.join(wanted)}")
    return params
