"""Minimal reverse-mode autodiff over numpy, sized for small conv nets.

Ops record onto an explicitly opened :class:`Tape`; execution order is the
topological order, so ``backward`` is a single reverse sweep over the node
list. Training runs in float32 throughout; float64 tensors are permitted so
numeric verification can run above float32 rounding noise.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "backward",
    "set_debug_checks",
    "add",
    "sub",
    "mul",
    "conv2d",
    "linear",
    "relu",
    "leaky_relu",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "permute",
    "index0",
    "concat",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


_active_tape: Optional["Tape"] = None
_debug_checks = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle per-op finite-output assertions (slow; meant for tests)."""
    global _debug_checks
    _debug_checks = bool(enabled)


def _check_finite(op: str, arr: np.ndarray) -> None:
    if _debug_checks and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{op} produced non-finite values")


class Tensor:
    """N-d float array with optional gradient tracking.

    ``grad`` is populated by :func:`backward` and holds d(loss)/d(self)
    with the same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        # Internal: wrap an op result without re-casting its dtype.
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Same data, cut from the graph (no gradient flows past it)."""
        return Tensor._wrap(self.data, False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)


class TapeNode:
    """One executed op: its output, inputs, and per-input vjp callbacks."""

    __slots__ = ("op", "out", "inputs", "vjps")

    def __init__(self, op: str, out: Tensor, inputs, vjps):
        self.op = op
        self.out = out
        self.inputs = tuple(inputs)
        self.vjps = tuple(vjps)


class Tape:
    """Ordered record of executed ops.

    Ops append in execution order, so every node's inputs precede it and a
    single reverse sweep implements reverse-mode differentiation. Use as a
    context manager; at most one tape is active at a time.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self) -> "Tape":
        global _active_tape
        if _active_tape is not None:
            raise RuntimeError("a Tape is already active; nested tapes are not supported")
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _active_tape
        _active_tape = None
        return False

    def __len__(self) -> int:
        return len(self.nodes)


def record(op: str, out: Tensor, inputs: Sequence[Tensor],
           vjps: Sequence[Optional[Callable[[np.ndarray], np.ndarray]]]) -> None:
    """Append a node for ``out`` if a tape is active and grads are needed.

    Exposed so composite ops (e.g. the detection losses) can register their
    own fused backward rules.
    """
    if _active_tape is not None and out.requires_grad:
        _active_tape.nodes.append(TapeNode(op, out, inputs, vjps))


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    ``loss`` must be a scalar produced on ``tape``. Each tape node is visited
    exactly once, in reverse execution order; gradients accumulate by
    summation, so leaves feeding multiple ops receive the total derivative.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    for node in tape.nodes:
        if node.out is loss:
            break
    else:
        raise ValueError("loss tensor was not produced on this tape")

    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        for inp, vjp in zip(node.inputs, node.vjps):
            if vjp is None or not inp.requires_grad:
                continue
            contrib = vjp(g)
            if inp.grad is None:
                inp.grad = contrib
            else:
                inp.grad = inp.grad + contrib


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype), requires_grad=False, dtype=like.dtype)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(op: str, a, b, fwd, vjp_a, vjp_b) -> Tensor:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError(f"{op} needs at least one Tensor operand")
    ref = a if isinstance(a, Tensor) else b
    a = _as_tensor(a, ref)
    b = _as_tensor(b, ref)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not align")
    out_data = fwd(a.data, b.data)
    _check_finite(op, out_data)
    out = Tensor._wrap(out_data, a.requires_grad or b.requires_grad)
    record(op, out, (a, b),
           (lambda g, a=a, b=b: _unbroadcast(vjp_a(g, a.data, b.data), a.shape),
            lambda g, a=a, b=b: _unbroadcast(vjp_b(g, a.data, b.data), b.shape)))
    return out


def add(a, b) -> Tensor:
    """Elementwise a + b (same shape, or one scalar operand)."""
    return _binary("add", a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    """Elementwise a - b (same shape, or one scalar operand)."""
    return _binary("sub", a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    """Elementwise a * b (same shape, or one scalar operand)."""
    return _binary("mul", a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def _conv_out_size(n: int, k: int, stride: int, padding: int, axis: str) -> int:
    span = n + 2 * padding - k
    if span < 0 or span % stride != 0:
        raise ValueError(
            f"conv2d: {axis}={n} with kernel {k}, stride {stride}, padding {padding} "
            f"gives a non-integer output size"
        )
    out = span // stride + 1
    if out < 1:
        raise ValueError(f"conv2d: non-positive output {axis} size {out}")
    return out


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # x is already padded; returns (N, C*kh*kw, H_out*W_out), C-contiguous.
    n, c, h, w = x.shape
    h_out = (h - kh) // stride + 1
    w_out = (w - kw) // stride + 1
    sn, sc, sh, sw = x.strides
    patches = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, kh, kw, h_out, w_out),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return patches.reshape(n, c * kh * kw, h_out * w_out)


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int) -> np.ndarray:
    # Scatter-add columns back onto the padded-input shape.
    n, c, h, w = x_shape
    h_out = (h - kh) // stride + 1
    w_out = (w - kw) // stride + 1
    x = np.zeros(x_shape, dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, h_out, w_out)
    for i in range(kh):
        for j in range(kw):
            x[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += cols[:, :, i, j]
    return x


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate NCHW input with OIHW kernels, plus per-channel bias."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(
            f"conv2d expects 4-d input and kernel, got {x.shape} and {weight.shape}"
        )
    n, c, h, w = x.shape
    co, ci, kh, kw = weight.shape
    if ci != c:
        raise ShapeError(f"conv2d: input has {c} channels but kernel expects {ci}")
    if bias.data.shape != (co,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({co},)")
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"conv2d: padding must be >= 0, got {padding}")
    h_out = _conv_out_size(h, kh, stride, padding, "H")
    w_out = _conv_out_size(w, kw, stride, padding, "W")

    if padding > 0:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, kh, kw, stride)                  # (N, CKK, L)
    wmat = weight.data.reshape(co, -1)                  # (O, CKK)
    out_data = np.matmul(wmat, cols)                    # (N, O, L)
    out_data += bias.data[:, None]
    out_data = out_data.reshape(n, co, h_out, w_out)
    _check_finite("conv2d", out_data)

    out = Tensor._wrap(out_data, x.requires_grad or weight.requires_grad or bias.requires_grad)

    if out.requires_grad and _active_tape is not None:
        padded_shape = xp.shape

        def vjp_x(g):
            go = g.reshape(n, co, -1)
            gcols = np.matmul(wmat.T, go)
            gx = _col2im(gcols, padded_shape, kh, kw, stride)
            if padding > 0:
                gx = gx[:, :, padding:padding + h, padding:padding + w]
            return gx

        def vjp_w(g):
            go = g.reshape(n, co, -1)
            gw = np.tensordot(go, cols, axes=([0, 2], [0, 2]))
            return gw.reshape(weight.shape)

        def vjp_b(g):
            return g.sum(axis=(0, 2, 3))

        record("conv2d", out, (x, weight, bias), (vjp_x, vjp_w, vjp_b))
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map x @ weight.T + bias for x (N, F), weight (G, F), bias (G,)."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError(f"linear expects 2-d input and weight, got {x.shape} and {weight.shape}")
    n, f = x.shape
    g_out, f_w = weight.shape
    if f != f_w:
        raise ShapeError(f"linear: input features {f} != weight features {f_w}")
    if bias.data.shape != (g_out,):
        raise ShapeError(f"linear: bias shape {bias.shape} != ({g_out},)")
    out_data = x.data @ weight.data.T + bias.data
    _check_finite("linear", out_data)
    out = Tensor._wrap(out_data, x.requires_grad or weight.requires_grad or bias.requires_grad)
    record("linear", out, (x, weight, bias),
           (lambda g: g @ weight.data,
            lambda g: g.T @ x.data,
            lambda g: g.sum(axis=0)))
    return out


def relu(x: Tensor) -> Tensor:
    """Elementwise max(x, 0)."""
    out_data = np.maximum(x.data, 0)
    out = Tensor._wrap(out_data, x.requires_grad)
    record("relu", out, (x,), (lambda g: g * (x.data > 0),))
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """Elementwise max(x, slope * x) for slope in [0, 1)."""
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu: slope must be in [0, 1), got {slope}")
    xd = x.data
    out_data = np.where(xd > 0, xd, slope * xd)
    out = Tensor._wrap(out_data, x.requires_grad)
    record("leaky_relu", out, (x,),
           (lambda g: g * np.where(xd > 0, xd.dtype.type(1), xd.dtype.type(slope)),))
    return out


def reduce_mean(x: Tensor) -> Tensor:
    """Arithmetic mean over all elements, as a 0-d tensor."""
    if x.data.size == 0:
        raise ShapeError("reduce_mean of an empty tensor")
    out = Tensor._wrap(x.data.mean(), x.requires_grad)
    record("reduce_mean", out, (x,),
           (lambda g: np.broadcast_to(g / x.data.size, x.data.shape).astype(x.data.dtype, copy=True),))
    return out


def reduce_sum(x: Tensor) -> Tensor:
    """Sum over all elements, as a 0-d tensor."""
    out = Tensor._wrap(x.data.sum(), x.requires_grad)
    record("reduce_sum", out, (x,),
           (lambda g: np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=True),))
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor._wrap(x.data.reshape(shape), x.requires_grad)
    record("reshape", out, (x,), (lambda g: g.reshape(x.data.shape),))
    return out


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor._wrap(np.ascontiguousarray(x.data.transpose(axes)), x.requires_grad)
    record("permute", out, (x,), (lambda g: g.transpose(inv),))
    return out


def index0(x: Tensor, i: int) -> Tensor:
    """Select row ``i`` along the leading axis (e.g. one sample of a batch)."""
    if not 0 <= i < x.data.shape[0]:
        raise ShapeError(f"index {i} out of range for leading dim {x.data.shape[0]}")
    out = Tensor._wrap(x.data[i], x.requires_grad)

    def vjp(g):
        full = np.zeros_like(x.data)
        full[i] = g
        return full

    record("index0", out, (x,), (vjp,))
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``."""
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor._wrap(out_data, any(t.requires_grad for t in tensors))

    vjps = []
    start = 0
    for t in tensors:
        n = t.data.shape[axis]
        sl = [slice(None)] * out_data.ndim
        sl[axis] = slice(start, start + n)
        vjps.append(lambda g, sl=tuple(sl): g[sl])
        start += n
    record("concat", out, tuple(tensors), tuple(vjps))
    return out
