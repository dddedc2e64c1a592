"""Dense tensors with reverse-mode differentiation.

Arrays use the NCHW layout for images and feature volumes. float32 is the
working precision; float64 exists for the finite-difference gradient
checker, which needs the headroom.

Every operation validates its inputs, computes with plain numpy, and (when
any input participates in differentiation) records a closure that routes
the output gradient back to its parents. Gradients accumulate into
``Tensor.grad`` buffers when ``backward()`` is called on a scalar.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

DEFAULT_DTYPE = np.float32
WIDE_DTYPE = np.float64

_MAX_RANK = 4


class Tensor:
    """A dense numeric array plus an optional node in the gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
        if arr.ndim > _MAX_RANK:
            raise ValueError(f"tensor rank {arr.ndim} exceeds the supported maximum of {_MAX_RANK}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def relu(self) -> "Tensor":
        return relu(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def sum(self) -> "Tensor":
        return tsum(self)

    def mean(self) -> "Tensor":
        return tmean(self)

    def __add__(self, other) -> "Tensor":
        return add(self, _as_tensor(other, self.dtype))

    def __sub__(self, other) -> "Tensor":
        return sub(self, _as_tensor(other, self.dtype))

    def __mul__(self, other) -> "Tensor":
        return mul(self, _as_tensor(other, self.dtype))

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, _as_tensor(other, self.dtype))

    def __repr__(self) -> str:
        grad_flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{grad_flag})"

    def backward(self) -> None:
        """Run reverse-mode differentiation from this scalar."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require gradients")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype), requires_grad=False, dtype=dtype)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    needs = any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, inverting numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / shape ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, -_unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0)

    def backward(g):
        _accumulate(x, g * (x.data > 0))

    return _result(data, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    data = _sigmoid_raw(x.data)

    def backward(g):
        _accumulate(x, g * data * (1 - data))

    return _result(data, (x,), backward)


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in (shape if isinstance(shape, (tuple, list)) else (shape,)))
    data = x.data.reshape(shape)

    def backward(g):
        _accumulate(x, g.reshape(x.data.shape))

    return _result(data, (x,), backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two NCHW tensors along the channel axis."""
    if a.ndim != 4 or b.ndim != 4:
        raise ValueError("concat_channels expects rank-4 tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"incompatible shapes for channel concat: {a.shape} vs {b.shape}")
    ca = a.shape[1]
    data = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        _accumulate(a, g[:, :ca])
        _accumulate(b, g[:, ca:])

    return _result(data, (a, b), backward)


def tsum(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.dtype)

    def backward(g):
        _accumulate(x, np.broadcast_to(g, x.data.shape))

    return _result(data, (x,), backward)


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    data = np.asarray(x.data.mean(), dtype=x.dtype)

    def backward(g):
        _accumulate(x, np.broadcast_to(g / n, x.data.shape))

    return _result(data, (x,), backward)


# ---------------------------------------------------------------------------
# linear layers
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects rank-2 tensors")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(data, (a, b), backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map x @ W + b for x of shape (N, D), W (D, M), b (M,)."""
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1:
        raise ValueError("dense expects x rank 2, weight rank 2, bias rank 1")
    if x.shape[1] != weight.shape[0]:
        raise ValueError(f"inner dimensions disagree: input {x.shape} vs weight {weight.shape}")
    if bias.shape[0] != weight.shape[1]:
        raise ValueError(f"bias length {bias.shape[0]} does not match output width {weight.shape[1]}")
    data = x.data @ weight.data + bias.data

    def backward(g):
        _accumulate(x, g @ weight.data.T)
        _accumulate(weight, x.data.T @ g)
        _accumulate(bias, g.sum(axis=0))

    return _result(data, (x, weight, bias), backward)


# ---------------------------------------------------------------------------
# convolution / pooling / resizing
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, *, padding: int = 0, stride: int = 1) -> Tensor:
    """Cross-correlation of an NCHW input with an (Cout, Cin, kH, kW) kernel."""
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be rank 4, got shape {x.shape}")
    if kernel.ndim != 4:
        raise ValueError(f"conv2d kernel must be rank 4, got shape {kernel.shape}")
    n, cin, h, w = x.shape
    cout, cin_k, kh, kw = kernel.shape
    if cin != cin_k:
        raise ValueError(f"input has {cin} channels but kernel expects {cin_k}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel extents must be odd, got {kh}x{kw}")
    if bias.shape != (cout,):
        raise ValueError(f"bias shape {bias.shape} does not match {cout} output channels")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError("kernel larger than padded input")

    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if padding > 0:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data

    # Offset-loop contraction: kh*kw skinny GEMMs into a channels-last
    # accumulator beat an im2col gather at these channel widths.
    hs = (ho - 1) * stride + 1
    ws = (wo - 1) * stride + 1
    acc = np.zeros((n, ho, wo, cout), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i:i + hs:stride, j:j + ws:stride]
            acc += np.tensordot(xs, kernel.data[:, :, i, j], axes=([1], [1]))
    acc += bias.data
    data = np.ascontiguousarray(acc.transpose(0, 3, 1, 2))

    def backward(g):
        _accumulate(bias, g.sum(axis=(0, 2, 3)))
        if kernel.requires_grad:
            gmat = g.transpose(1, 0, 2, 3).reshape(cout, n * ho * wo)
            gw = np.empty_like(kernel.data)
            for i in range(kh):
                for j in range(kw):
                    xs = xp[:, :, i:i + hs:stride, j:j + ws:stride]
                    gw[:, :, i, j] = gmat @ xs.transpose(1, 0, 2, 3).reshape(cin, n * ho * wo).T
            _accumulate(kernel, gw)
        if x.requires_grad:
            q = kh - 1 - padding
            if stride == 1 and q >= 0 and kw - 1 - padding >= 0:
                # Input gradient of a stride-1 correlation is the full
                # correlation of g with the flipped, channel-swapped kernel.
                gp = np.pad(g, ((0, 0), (0, 0), (q, q), (kw - 1 - padding, kw - 1 - padding)))
                gacc = np.zeros((n, h, w, cin), dtype=x.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gs = gp[:, :, i:i + h, j:j + w]
                        gacc += np.tensordot(gs, kernel.data[:, :, kh - 1 - i, kw - 1 - j], axes=([1], [0]))
                _accumulate(x, np.ascontiguousarray(gacc.transpose(0, 3, 1, 2)))
            else:
                gxp = np.zeros_like(xp)
                gfold = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
                for i in range(kh):
                    for j in range(kw):
                        gi = (gfold @ kernel.data[:, :, i, j]).reshape(n, ho, wo, cin)
                        gxp[:, :, i:i + hs:stride, j:j + ws:stride] += gi.transpose(0, 3, 1, 2)
                if padding > 0:
                    gxp = gxp[:, :, padding:padding + h, padding:padding + w]
                _accumulate(x, gxp)

    return _result(data, (x, kernel, bias), backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; gradient goes to the first max in scan order."""
    if x.ndim != 4:
        raise ValueError(f"maxpool2 input must be rank 4, got shape {x.shape}")
    n, c, h, w = x.shape
    if h % 2 != 0 or w % 2 != 0:
        raise ValueError(f"maxpool2 needs even spatial extents, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    windows = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = windows.argmax(axis=-1)
    data = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gwin = np.zeros_like(windows)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = gwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        _accumulate(x, gx)

    return _result(data, (x,), backward)


def interp_matrix(src: int, dst: int, dtype=np.float64) -> np.ndarray:
    """Corner-aligned 1-D bilinear interpolation matrix of shape (dst, src).

    Rows are convex weights; src == dst yields the identity exactly.
    """
    if src < 1 or dst < 1:
        raise ValueError("interpolation extents must be >= 1")
    m = np.zeros((dst, src), dtype=dtype)
    if dst == 1 or src == 1:
        pos = np.zeros(dst)
    else:
        pos = np.arange(dst) * ((src - 1) / (dst - 1))
    i0 = np.floor(pos).astype(np.int64)
    i0 = np.minimum(i0, src - 1)
    i1 = np.minimum(i0 + 1, src - 1)
    frac = (pos - i0).astype(dtype)
    rows = np.arange(dst)
    np.add.at(m, (rows, i0), 1 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def upsample_bilinear(x: Tensor, out_hw: tuple[int, int]) -> Tensor:
    """Non-learned bilinear resize of an NCHW tensor (corner-aligned)."""
    if x.ndim != 4:
        raise ValueError(f"upsample_bilinear input must be rank 4, got shape {x.shape}")
    ho, wo = int(out_hw[0]), int(out_hw[1])
    h, w = x.shape[2], x.shape[3]
    wr = interp_matrix(h, ho, dtype=x.dtype)
    wc = interp_matrix(w, wo, dtype=x.dtype)
    t = np.tensordot(x.data, wr, axes=([2], [1])).transpose(0, 1, 3, 2)
    data = np.tensordot(t, wc, axes=([3], [1]))

    def backward(g):
        t2 = np.tensordot(g, wr, axes=([2], [0])).transpose(0, 1, 3, 2)
        _accumulate(x, np.tensordot(t2, wc, axes=([3], [0])))

    return _result(data, (x,), backward)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true class."""
    if logits.ndim != 2:
        raise ValueError(f"logits must be rank 2 (N, K), got shape {logits.shape}")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"need {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    shifted = z - m
    ez = np.exp(shifted)
    sez = ez.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(sez)
    data = np.asarray(-log_probs[np.arange(n), labels].mean(), dtype=z.dtype)

    def backward(g):
        grad = ez / sez
        grad[np.arange(n), labels] -= 1
        _accumulate(logits, g * grad / n)

    return _result(data, (logits,), backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a plain array (no gradient)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against {0,1} targets.

    Fused with the squash for stability: finite for any finite logits.
    """
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ValueError(f"target shape {t.shape} does not match logits shape {logits.shape}")
    z = logits.data
    per_elem = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    data = np.asarray(per_elem.mean(), dtype=z.dtype)
    n = z.size

    def backward(g):
        _accumulate(logits, g * (_sigmoid_raw(z) - t) / n)

    return _result(data, (logits,), backward)
