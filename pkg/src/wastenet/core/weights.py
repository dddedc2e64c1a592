"""Binary weight files ("FWWT" format).

Layout, all little-endian:
    magic "FWWT", u32 version = 1, u32 tensor count;
    per tensor: u16 name length, UTF-8 name, u8 trainable flag, u8 rank,
    rank x u32 dims, then float32 values in row-major order.

Tensors are written in lexicographic name order, so save -> load -> save
round-trips to identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .params import ParamSet
from .tensor import Tensor

MAGIC = b"FWWT"
VERSION = 1


class WeightFormatError(RuntimeError):
    """Raised when a weight file is corrupt or does not match expectations."""


def save_weights(params: ParamSet, path) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, t in params.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"parameter name too long: {name!r}")
        data = np.ascontiguousarray(t.data, dtype="<f4")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", 1 if t.requires_grad else 0, data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    path.write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise WeightFormatError(f"truncated weight file: {self.path}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out


def load_weights(path) -> ParamSet:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != MAGIC:
        raise WeightFormatError(f"bad magic in weight file: {path}")
    version, count = struct.unpack("<II", r.take(8))
    if version != VERSION:
        raise WeightFormatError(f"unsupported weight file version {version} in {path}")
    params = ParamSet()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2))
        name = r.take(name_len).decode("utf-8")
        trainable, rank = struct.unpack("<BB", r.take(2))
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank)) if rank else ()
        n_values = int(np.prod(dims)) if dims else 1
        raw = r.take(4 * n_values)
        data = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        params.add(name, Tensor(data), trainable=bool(trainable))
    if r.pos != len(r.blob):
        raise WeightFormatError(f"trailing bytes in weight file: {path}")
    return params


def load_weights_into(params: ParamSet, path) -> None:
    """Fill an existing ParamSet from a file, validating names and shapes.

    The file must contain exactly the entries of `params`; the first
    mismatch is reported by tensor name. Trainable flags on `params` win.
    """
    loaded = load_weights(path)
    for name, t in params.items():
        if name not in loaded:
            raise WeightFormatError(f"weight file {path} is missing tensor {name!r}")
        src = loaded[name]
        if src.data.shape != t.data.shape:
            raise WeightFormatError(
                f"shape mismatch for tensor {name!r}: file has {src.data.shape}, "
                f"model expects {t.data.shape}")
        t.data = src.data.astype(t.dtype)
    extra = [n for n in loaded.names() if n not in params]
    if extra:
        raise WeightFormatError(f"weight file {path} has unexpected tensor {extra[0]!r}")
