"""Dense-tensor reverse-mode differentiation.

Exactly the operator set the coefficient-recovery network needs: elementwise
arithmetic, matmul, shape ops, softmax / layer norm / GELU, 3x3 convolutions
(plain and depthwise), stride-2 transpose convolution, window partitioning,
cyclic shifts, gather for learned attention biases, and scalar reductions.
Every operator carries an analytic backward; the test suite checks each one
against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erf

from .errors import NonScalarLoss, ShapeMismatch, StateShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def grad_or_zero(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(v, dtype) -> Tensor:
    if isinstance(v, Tensor):
        return v
    return Tensor(np.asarray(v, dtype=dtype))


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Reverse accumulation from a scalar into every reachable tensor."""
    if loss.data.size != 1:
        raise NonScalarLoss(f"backward needs a scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# --- elementwise arithmetic ---

def add(a, b) -> Tensor:
    a = _as_tensor(a, np.float64)
    b = _as_tensor(b, a.dtype)
    out_data = a.data + b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a = _as_tensor(a, np.float64)
    b = _as_tensor(b, a.dtype)
    out_data = a.data - b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, -_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a = _as_tensor(a, np.float64)
    b = _as_tensor(b, a.dtype)
    out_data = a.data * b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), bwd)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def bwd(g):
        _accumulate(a, g * 0.5 / out_data)

    return _make(out_data, (a,), bwd)


def abs_(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, g * np.sign(a.data))

    return _make(np.abs(a.data), (a,), bwd)


def gelu(a: Tensor) -> Tensor:
    x = a.data
    phi = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    out_data = x * phi

    def bwd(g):
        dens = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        _accumulate(a, g * (phi + x * dens))

    return _make(out_data, (a,), bwd)


# --- matmul and shape ops ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatch("matmul operands must have ndim >= 2")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
        _accumulate(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    return _make(out_data, (a, b), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    def bwd(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), bwd)


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        _accumulate(a, g.transpose(inverse))

    return _make(a.data.transpose(axes), (a,), bwd)


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return _make(out_data, tuple(tensors), bwd)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accumulate(a, full)

    return _make(a.data[idx], (a,), bwd)


def take_last(a: Tensor, indices: np.ndarray) -> Tensor:
    """Gather along the last axis with a fixed integer index array."""
    indices = np.asarray(indices)
    out_data = a.data[..., indices]

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (..., indices), g)
        _accumulate(a, full)

    return _make(out_data, (a,), bwd)


# --- normalization and attention pieces ---

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        gs = g * s
        _accumulate(a, gs - s * gs.sum(axis=axis, keepdims=True))

    return _make(s, (a,), bwd)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, axis: int, eps: float = 1e-5) -> Tensor:
    n = a.data.shape[axis]
    if gamma.data.shape != (n,) or beta.data.shape != (n,):
        raise ShapeMismatch(f"layer_norm affine params must have shape ({n},)")
    bshape = [1] * a.data.ndim
    bshape[axis] = n
    gb = gamma.data.reshape(bshape)
    bb = beta.data.reshape(bshape)

    mu = a.data.mean(axis=axis, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = gb * xhat + bb
    reduce_axes = tuple(i for i in range(a.data.ndim) if i != (axis % a.data.ndim))

    def bwd(g):
        _accumulate(gamma, (g * xhat).sum(axis=reduce_axes))
        _accumulate(beta, g.sum(axis=reduce_axes))
        dxhat = g * gb
        term = dxhat - dxhat.mean(axis=axis, keepdims=True) - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True)
        _accumulate(a, inv * term)

    return _make(out_data, (a, gamma, beta), bwd)


# --- reductions ---

def mean(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, np.full_like(a.data, float(g) / a.data.size))

    return _make(np.asarray(a.data.mean(), dtype=a.data.dtype), (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, np.full_like(a.data, float(g)))

    return _make(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,), bwd)


# --- convolutions (3x3, pad 1, stride 1) ---

def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, depthwise: bool = False) -> Tensor:
    """3x3 convolution with padding 1. x: (B, C, H, W).

    Plain: w (O, C, 3, 3). Depthwise: w (C, 1, 3, 3), one filter per channel.
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or w.data.shape[2:] != (3, 3):
        raise ShapeMismatch(f"conv2d expects (B,C,H,W) x and 3x3 kernels, got {x.data.shape} {w.data.shape}")
    bsz, cin, h, wid = x.data.shape
    if depthwise:
        if w.data.shape[:2] != (cin, 1):
            raise ShapeMismatch(f"depthwise kernel {w.data.shape} does not match {cin} channels")
        cout = cin
    else:
        if w.data.shape[1] != cin:
            raise ShapeMismatch(f"kernel expects {w.data.shape[1]} input channels, got {cin}")
        cout = w.data.shape[0]
    if b is not None and b.data.shape != (cout,):
        raise ShapeMismatch(f"bias must have shape ({cout},)")

    xr = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1))).transpose(0, 2, 3, 1)  # (B, H+2, W+2, C)
    out = np.zeros((bsz, h, wid, cout), dtype=x.data.dtype)
    for i in range(3):
        for j in range(3):
            window = xr[:, i : i + h, j : j + wid, :]
            if depthwise:
                out += window * w.data[:, 0, i, j]
            else:
                out += window @ w.data[:, :, i, j].T
    if b is not None:
        out += b.data
    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        gr = g.transpose(0, 2, 3, 1)  # (B, H, W, O)
        gxr = np.zeros_like(xr)
        gw = np.zeros_like(w.data)
        for i in range(3):
            for j in range(3):
                window = xr[:, i : i + h, j : j + wid, :]
                if depthwise:
                    gw[:, 0, i, j] = np.einsum("bhwc,bhwc->c", gr, window)
                    gxr[:, i : i + h, j : j + wid, :] += gr * w.data[:, 0, i, j]
                else:
                    gw[:, :, i, j] = np.tensordot(gr, window, axes=([0, 1, 2], [0, 1, 2]))
                    gxr[:, i : i + h, j : j + wid, :] += gr @ w.data[:, :, i, j]
        _accumulate(x, gxr[:, 1:-1, 1:-1, :].transpose(0, 3, 1, 2))
        _accumulate(w, gw)
        if b is not None:
            _accumulate(b, gr.sum(axis=(0, 1, 2)))

    return _make(out.transpose(0, 3, 1, 2), parents, bwd)


def transpose_conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-2 transposed convolution with a 2x2 kernel: exact 2x upsampling.

    x: (B, C, H, W); w: (C, O, 2, 2) -> (B, O, 2H, 2W).
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or w.data.shape[2:] != (2, 2):
        raise ShapeMismatch(f"transpose_conv2d expects 2x2 kernels, got {w.data.shape}")
    bsz, cin, h, wid = x.data.shape
    if w.data.shape[0] != cin:
        raise ShapeMismatch(f"kernel expects {w.data.shape[0]} input channels, got {cin}")
    cout = w.data.shape[1]
    if b is not None and b.data.shape != (cout,):
        raise ShapeMismatch(f"bias must have shape ({cout},)")

    xr = x.data.transpose(0, 2, 3, 1)  # (B, H, W, C)
    out = np.empty((bsz, 2 * h, 2 * wid, cout), dtype=x.data.dtype)
    for i in range(2):
        for j in range(2):
            out[:, i::2, j::2, :] = xr @ w.data[:, :, i, j]
    if b is not None:
        out += b.data
    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        gr = g.transpose(0, 2, 3, 1)
        gx = np.zeros_like(xr)
        gw = np.zeros_like(w.data)
        for i in range(2):
            for j in range(2):
                gs = gr[:, i::2, j::2, :]
                gx += gs @ w.data[:, :, i, j].T
                gw[:, :, i, j] = np.tensordot(xr, gs, axes=([0, 1, 2], [0, 1, 2]))
        _accumulate(x, gx.transpose(0, 3, 1, 2))
        _accumulate(w, gw)
        if b is not None:
            _accumulate(b, gr.sum(axis=(0, 1, 2)))

    return _make(out.transpose(0, 3, 1, 2), parents, bwd)


# --- windowing ---

def window_partition(x: Tensor, m: int) -> Tensor:
    """(B, C, H, W) -> (B * H/m * W/m, m*m, C) token windows."""
    bsz, c, h, w = x.data.shape
    if h % m or w % m:
        raise ShapeMismatch(f"spatial dims {(h, w)} not divisible by window {m}")
    nh, nw = h // m, w // m
    data = (
        x.data.reshape(bsz, c, nh, m, nw, m)
        .transpose(0, 2, 4, 3, 5, 1)
        .reshape(bsz * nh * nw, m * m, c)
    )

    def bwd(g):
        gx = (
            g.reshape(bsz, nh, nw, m, m, c)
            .transpose(0, 5, 1, 3, 2, 4)
            .reshape(bsz, c, h, w)
        )
        _accumulate(x, gx)

    return _make(data, (x,), bwd)


def window_reverse(windows: Tensor, m: int, h: int, w: int) -> Tensor:
    """Inverse of :func:`window_partition`."""
    nh, nw = h // m, w // m
    nwin, tokens, c = windows.data.shape
    if tokens != m * m or nwin % (nh * nw):
        raise ShapeMismatch("window_reverse shape does not match the partition")
    bsz = nwin // (nh * nw)
    data = (
        windows.data.reshape(bsz, nh, nw, m, m, c)
        .transpose(0, 5, 1, 3, 2, 4)
        .reshape(bsz, c, h, w)
    )

    def bwd(g):
        gw = (
            g.reshape(bsz, c, nh, m, nw, m)
            .transpose(0, 2, 4, 3, 5, 1)
            .reshape(nwin, tokens, c)
        )
        _accumulate(windows, gw)

    return _make(data, (windows,), bwd)


def cyclic_shift(x: Tensor, shift: tuple[int, int]) -> Tensor:
    """Roll the two spatial axes of (B, C, H, W) by (dy, dx)."""
    dy, dx = shift

    def bwd(g):
        _accumulate(x, np.roll(g, (-dy, -dx), axis=(2, 3)))

    return _make(np.roll(x.data, (dy, dx), axis=(2, 3)), (x,), bwd)


# --- parameters and optimization ---

class InitKind(Enum):
    ZERO = "zero"
    TRUNC_NORMAL = "trunc_normal"
    UNIFORM_FAN = "uniform_fan"


@dataclass
class Parameter:
    name: str
    tensor: Tensor
    init_kind: InitKind = InitKind.TRUNC_NORMAL


def trunc_normal(rng: np.random.Generator, shape, sigma: float = 0.02, dtype=np.float64) -> np.ndarray:
    """Normal(0, sigma) redrawn until within 2 sigma."""
    out = rng.standard_normal(shape)
    for _ in range(8):
        bad = np.abs(out) > 2.0
        if not bad.any():
            break
        out[bad] = rng.standard_normal(int(bad.sum()))
    return (np.clip(out, -2.0, 2.0) * sigma).astype(dtype)


@dataclass
class AdamState:
    step: int
    m: dict
    v: dict

    @classmethod
    def zeros(cls, params: list[Parameter]) -> "AdamState":
        return cls(
            step=0,
            m={p.name: np.zeros_like(p.tensor.data) for p in params},
            v={p.name: np.zeros_like(p.tensor.data) for p in params},
        )


def adam_step(
    params: list[Parameter],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.99,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update in place; missing grads count as zero."""
    state.step += 1
    t = state.step
    for p in params:
        m = state.m.get(p.name)
        v = state.v.get(p.name)
        if m is None or m.shape != p.tensor.data.shape or v.shape != p.tensor.data.shape:
            raise StateShapeMismatch(f"optimizer state mismatch for {p.name}")
        g = p.tensor.grad_or_zero()
        m[...] = beta1 * m + (1.0 - beta1) * g
        v[...] = beta2 * v + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        p.tensor.data = p.tensor.data - (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.tensor.data.dtype)


def clip_grad_global_norm(params: list[Parameter], max_norm: float = 0.2) -> float:
    """Scale all grads so the global L2 norm is at most max_norm; returns the raw norm."""
    total = 0.0
    for p in params:
        if p.tensor.grad is not None:
            total += float((p.tensor.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.tensor.grad is not None:
                p.tensor.grad = p.tensor.grad * scale
    return norm
