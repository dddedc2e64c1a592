"""Named parameter collections with trainable/frozen bookkeeping."""

from __future__ import annotations

import math
import zlib
from typing import Iterator, NamedTuple

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor


class ParamCounts(NamedTuple):
    total: int
    trainable: int
    frozen: int


class ParamSet:
    """Map from hierarchical names to parameter tensors.

    Iteration order is lexicographic in the name, so every walk over the
    set is deterministic. A tensor's ``requires_grad`` flag doubles as its
    trainable flag: frozen entries never receive gradient.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor, trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name!r}")
        tensor.requires_grad = bool(trainable)
        self._entries[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return sorted(self._entries)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in sorted(self._entries):
            yield name, self._entries[name]

    def trainable_items(self) -> Iterator[tuple[str, Tensor]]:
        for name, t in self.items():
            if t.requires_grad:
                yield name, t

    def is_trainable(self, name: str) -> bool:
        return self._entries[name].requires_grad

    def zero_grad(self) -> None:
        for _, t in self.items():
            t.grad = None

    def subset(self, prefix: str) -> "ParamSet":
        """View of all entries under `prefix/`, sharing the same tensors."""
        sub = ParamSet()
        lead = prefix.rstrip("/") + "/"
        for name, t in self.items():
            if name.startswith(lead):
                sub._entries[name] = t
        return sub

    def copy(self) -> "ParamSet":
        dup = ParamSet()
        for name, t in self.items():
            dup._entries[name] = Tensor(t.data.copy(), requires_grad=t.requires_grad, dtype=t.dtype)
        return dup

    def astype(self, dtype) -> "ParamSet":
        dup = ParamSet()
        for name, t in self.items():
            dup._entries[name] = Tensor(t.data.astype(dtype), requires_grad=t.requires_grad, dtype=dtype)
        return dup

    def state_fingerprint(self) -> bytes:
        """Order-stable digest of names, flags and raw values."""
        import hashlib

        h = hashlib.sha256()
        for name, t in self.items():
            h.update(name.encode())
            h.update(b"\x01" if t.requires_grad else b"\x00")
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.digest()


def param_count(params: ParamSet) -> ParamCounts:
    """Element counts of a ParamSet split by the trainable flag."""
    trainable = 0
    frozen = 0
    for _, t in params.items():
        if t.requires_grad:
            trainable += t.size
        else:
            frozen += t.size
    return ParamCounts(trainable + frozen, trainable, frozen)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def layer_rng(seed: int, name: str) -> np.random.Generator:
    """Generator keyed by (seed, layer name) so each layer draws a fixed stream."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def kaiming_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_conv(params: ParamSet, name: str, cin: int, cout: int, k: int, seed: int,
              trainable: bool = True, dtype=DEFAULT_DTYPE) -> None:
    """Add `name/weight` and `name/bias` for a k x k convolution."""
    rng = layer_rng(seed, name)
    w = kaiming_uniform((cout, cin, k, k), cin * k * k, rng, dtype)
    params.add(f"{name}/weight", Tensor(w, dtype=dtype), trainable)
    params.add(f"{name}/bias", Tensor(np.zeros(cout, dtype=dtype), dtype=dtype), trainable)


def init_dense(params: ParamSet, name: str, din: int, dout: int, seed: int,
               trainable: bool = True, dtype=DEFAULT_DTYPE) -> None:
    """Add `name/weight` and `name/bias` for an affine layer."""
    rng = layer_rng(seed, name)
    w = kaiming_uniform((din, dout), din, rng, dtype)
    params.add(f"{name}/weight", Tensor(w, dtype=dtype), trainable)
    params.add(f"{name}/bias", Tensor(np.zeros(dout, dtype=dtype), dtype=dtype), trainable)
