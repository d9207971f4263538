"""Tape-based reverse-mode differentiation over a small, fixed op set.

Every op builds a new :class:`Tensor` that remembers its parents and a
closure propagating the output gradient to them.  Tensors are numbered in
creation order, so sorting the reachable nodes by that number gives the
tape; :func:`backward` walks it in reverse.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterator, Sequence

import numpy as np

_ids = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording them on the tape."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class DimensionError(ValueError):
    """Shape mismatch between an op's operands."""

    def __init__(self, op: str, expected, actual):
        self.op = op
        self.expected = expected
        self.actual = actual
        super().__init__(f"{op}: expected shape {expected}, got {actual}")


class GraphError(RuntimeError):
    """Backward requested on something that has no recorded forward pass."""


class NonFiniteError(FloatingPointError):
    """A loss or activation became NaN/Inf."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_id")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], Sequence] | None = None,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or (
            _grad_enabled and any(p.requires_grad for p in parents))
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None
        self._id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # operator sugar for the ops used by the layers
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError("matmul", (a.data.shape[-1],), (b.data.shape[0],))
    out_data = a.data @ b.data

    def _backward(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return Tensor(out_data, parents=(a, b), backward=_backward)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data + b.data
    except ValueError:
        raise DimensionError("add", a.shape, b.shape) from None

    def _backward(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return Tensor(out_data, parents=(a, b), backward=_backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError("sub", a.shape, b.shape)

    def _backward(g):
        return g, -g

    return Tensor(a.data - b.data, parents=(a, b), backward=_backward)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)
    mask = out_data > 0

    def _backward(g):
        return (g * mask,)

    return Tensor(out_data, parents=(x,), backward=_backward)


def square(x: Tensor) -> Tensor:
    def _backward(g):
        return (2.0 * g * x.data,)

    return Tensor(x.data * x.data, parents=(x,), backward=_backward)


def scale(x: Tensor, c: float) -> Tensor:
    def _backward(g):
        return (g * c,)

    return Tensor(x.data * x.data.dtype.type(c), parents=(x,), backward=_backward)


def reduce_sum(x: Tensor) -> Tensor:
    def _backward(g):
        return (np.broadcast_to(g, x.shape),)

    return Tensor(np.asarray(x.data.sum(dtype=np.float64), dtype=x.data.dtype),
                  parents=(x,), backward=_backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out_data = x.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", tuple(shape), x.shape) from None

    def _backward(g):
        return (g.reshape(x.shape),)

    return Tensor(out_data, parents=(x,), backward=_backward)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if len(xs) == 1:
        return xs[0]
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum([0] + sizes)
    out_data = np.concatenate([x.data for x in xs], axis=axis)

    def _backward(g):
        out = []
        for x, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            out.append(g[tuple(idx)] if x.requires_grad else None)
        return out

    return Tensor(out_data, parents=tuple(xs), backward=_backward)


def take(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    """Contiguous slice ``[start:stop]`` along ``axis``."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def _backward(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return (full,)

    return Tensor(x.data[idx], parents=(x,), backward=_backward)


# -- convolution ------------------------------------------------------------

def conv_output_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def deconv_output_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n - 1) * stride - 2 * pad + k


def _polyphase_ok(h: int, w: int, k: int, stride: int, pad: int) -> bool:
    return k % stride == 0 and (h + 2 * pad) % stride == 0 and (w + 2 * pad) % stride == 0


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    """Columns laid out (C*k*k, N*Ho*Wo) so the conv is a single matmul."""
    n, c, h, w = x.shape
    ho = conv_output_size(h, k, stride, pad)
    wo = conv_output_size(w, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    if _polyphase_ok(h, w, k, stride, pad):
        # tap index i = a*stride + r: slice phase (r, s) of the image at block offset (a, b)
        q, hb, wb = k // stride, x.shape[2] // stride, x.shape[3] // stride
        ph = x.reshape(n, c, hb, stride, wb, stride).transpose(1, 3, 5, 0, 2, 4)
        ph = np.ascontiguousarray(ph)  # (c, r, s, n, hb, wb)
        cols = np.empty((c, q, stride, q, stride, n, ho, wo), dtype=x.dtype)
        for a in range(q):
            for b in range(q):
                cols[:, a, :, b] = ph[:, :, :, :, a:a + ho, b:b + wo]
    else:
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        cols = win[:, :, ::stride, ::stride].transpose(1, 4, 5, 0, 2, 3)
    return cols.reshape(c * k * k, n * ho * wo), ho, wo


def _col2im(cols: np.ndarray, x_shape, k: int, stride: int, pad: int,
            ho: int, wo: int) -> np.ndarray:
    n, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    if _polyphase_ok(h, w, k, stride, pad):
        q, hb, wb = k // stride, hp // stride, wp // stride
        cols = cols.reshape(c, q, stride, q, stride, n, ho, wo)
        ph = np.zeros((c, stride, stride, n, hb, wb), dtype=cols.dtype)
        for a in range(q):
            for b in range(q):
                ph[:, :, :, :, a:a + ho, b:b + wo] += cols[:, a, :, b]
        out = ph.transpose(3, 0, 4, 1, 5, 2).reshape(n, c, hp, wp)
    else:
        cols = cols.reshape(c, k, k, n, ho, wo)
        out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
        for i in range(k):
            for j in range(k):
                out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                    cols[:, i, j].transpose(1, 0, 2, 3))
    return np.ascontiguousarray(out[:, :, pad:hp - pad, pad:wp - pad]) if pad else out


def _channels_first(g: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (C, N*H*W)."""
    return g.transpose(1, 0, 2, 3).reshape(g.shape[1], -1)


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int):
    o, k = w.shape[0], w.shape[2]
    cols, ho, wo = _im2col(x, k, stride, pad)
    y = (w.reshape(o, -1) @ cols).reshape(o, x.shape[0], ho, wo).transpose(1, 0, 2, 3)
    return y, cols


def _conv_input_grad(g: np.ndarray, w: np.ndarray, x_shape, stride: int, pad: int):
    o, k = w.shape[0], w.shape[2]
    ho, wo = g.shape[2:]
    dcols = w.reshape(o, -1).T @ _channels_first(g)
    return _col2im(dcols, x_shape, k, stride, pad, ho, wo)


def _conv_weight_grad(cols: np.ndarray, g: np.ndarray, w_shape) -> np.ndarray:
    return (_channels_first(g) @ cols.T).reshape(w_shape)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 2, pad: int = 1) -> Tensor:
    """Cross-correlation, NCHW input, weight (out_ch, in_ch, k, k)."""
    if x.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError("conv2d", ("N", w.shape[1], "H", "W"), x.shape)
    k = w.shape[2]
    if x.shape[2] + 2 * pad < k or x.shape[3] + 2 * pad < k:
        raise DimensionError("conv2d", (f">={k - 2 * pad}", f">={k - 2 * pad}"), x.shape[2:])
    y, cols = _conv_forward(x.data, w.data, stride, pad)
    if b is not None:
        y = y + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)

    def _backward(g):
        return (_conv_input_grad(g, w.data, x.shape, stride, pad) if x.requires_grad else None,
                _conv_weight_grad(cols, g, w.shape) if w.requires_grad else None,
                g.sum(axis=(0, 2, 3)) if b is not None else None)

    return Tensor(y, parents=parents, backward=_backward)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 2,
                     pad: int = 1) -> Tensor:
    """Adjoint of :func:`conv2d`; weight is (in_ch, out_ch, k, k)."""
    if x.data.ndim != 4 or x.shape[1] != w.shape[0]:
        raise DimensionError("conv_transpose2d", ("N", w.shape[0], "H", "W"), x.shape)
    k = w.shape[2]
    n, _, h, wd = x.shape
    out_shape = (n, w.shape[1], deconv_output_size(h, k, stride, pad),
                 deconv_output_size(wd, k, stride, pad))
    y = _conv_input_grad(x.data, w.data, out_shape, stride, pad)
    if b is not None:
        y = y + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)

    def _backward(g):
        dx = dw = None
        g_cols = None
        if x.requires_grad:
            dx, g_cols = _conv_forward(g, w.data, stride, pad)
        if w.requires_grad:
            if g_cols is None:
                g_cols, _, _ = _im2col(g, k, stride, pad)
            dw = _conv_weight_grad(g_cols, x.data, w.shape)
        return dx, dw, (g.sum(axis=(0, 2, 3)) if b is not None else None)

    return Tensor(y, parents=parents, backward=_backward)


# -- reverse sweep -------------------------------------------------------------

def _tape(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [root]
    while stack:
        t = stack.pop()
        if t._id in seen:
            continue
        seen.add(t._id)
        nodes.append(t)
        stack.extend(p for p in t._parents if p.requires_grad)
    nodes.sort(key=lambda t: t._id, reverse=True)
    return nodes


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss._backward is None:
        raise GraphError("backward() called on a tensor with no recorded forward pass")
    if loss.data.size != 1:
        raise GraphError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NonFiniteError(f"non-finite loss {float(loss.data)}")
    grads: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for node in _tape(loss):
        g = grads.pop(node._id, None)
        if g is None:
            continue
        if node._backward is None:
            node._accumulate(g)
            continue
        for p, gp in zip(node._parents, node._backward(g)):
            if gp is None or not p.requires_grad:
                continue
            if p._id in grads:
                grads[p._id] = grads[p._id] + gp
            else:
                grads[p._id] = gp
