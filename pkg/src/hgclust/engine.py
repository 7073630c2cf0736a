"""Dense float64 tensors with reverse-mode differentiation on a tape.

Every primitive the model needs is implemented here as a forward numpy
computation plus a backward closure recorded on the active tape. Backward
closures accumulate into ``Tensor.grad``; walking the tape in reverse
therefore populates every reachable gradient exactly once per backward
call. All reductions are sequential numpy reductions (add.reduceat,
add.at), so repeated seeded runs are bitwise identical.

Design constraints:
    * float64 only; gradient checks at 1e-4 relative are not feasible in
      32-bit.
    * broadcasting is supported only where the model needs it (bias rows,
      column scalars); anything else is a shape error from numpy.
    * tensors are immutable after creation except for ``grad``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericsError

# Optional NaN/Inf sweep after every primitive; tests enable it, training
# relies on loss-level checks instead (cheaper).
CHECK_FINITE = False


class Tensor:
    """A dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- gradient plumbing ---------------------------------------------

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


class Tape:
    """Ordered record of executed primitives, replayed in reverse."""

    def __init__(self):
        self._ops: list[Callable[[], None]] = []

    def __len__(self) -> int:
        return len(self._ops)

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._ops.append(backward_fn)

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise NumericsError("backward requires a scalar loss")
        loss.accumulate_grad(np.ones_like(loss.data))
        for fn in reversed(self._ops):
            fn()


_TAPE_STACK: list[Tape | None] = [None]


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1]


@contextlib.contextmanager
def record_onto(tape: Tape | None):
    """Route primitive recordings onto ``tape`` (None disables recording)."""
    _TAPE_STACK.append(tape)
    try:
        yield tape
    finally:
        _TAPE_STACK.pop()


def no_grad():
    return record_onto(None)


# -- helpers -----------------------------------------------------------


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite_or_raise(arr: np.ndarray, op: str) -> None:
    if CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values produced by {op}")


def _make(data: np.ndarray, op: str, parents: Sequence[Tensor],
          backward_fn: Callable[[Tensor], Callable[[], None]]) -> Tensor:
    """Wrap op output; record backward closure if a tape is active."""
    _finite_or_raise(data, op)
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    tape = active_tape()
    if tape is not None and out.requires_grad:
        inner = backward_fn(out)

        def guarded():
            # Outputs no loss depends on never receive a gradient; their
            # contribution is zero and the closure is skipped.
            if out.grad is not None:
                inner()

        tape.record(guarded)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` back down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- arithmetic primitives ----------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(out: Tensor):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(g, b.shape))
        return fn

    return _make(a.data + b.data, "add", (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(out: Tensor):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(-g, b.shape))
        return fn

    return _make(a.data - b.data, "sub", (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(out: Tensor):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(g * a.data, b.shape))
        return fn

    return _make(a.data * b.data, "mul", (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(out: Tensor):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))
        return fn

    return _make(a.data / b.data, "div", (a, b), bwd)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(-out.grad)
        return fn

    return _make(-a.data, "neg", (a,), bwd)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(out: Tensor):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)
        return fn

    return _make(a.data @ b.data, "matmul", (a, b), bwd)


def transpose(a) -> Tensor:
    a = as_tensor(a)

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad.T)
        return fn

    return _make(a.data.T, "transpose", (a,), bwd)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.shape

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad.reshape(orig))
        return fn

    return _make(a.data.reshape(shape), "reshape", (a,), bwd)


def concat(parts: Iterable, axis: int = 1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + widths)

    def bwd(out: Tensor):
        def fn():
            g = out.grad
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(lo, hi)
                    p.accumulate_grad(g[tuple(sl)])
        return fn

    return _make(np.concatenate([p.data for p in parts], axis=axis),
                 "concat", parts, bwd)


# -- reductions and indexing ---------------------------------------------


def tsum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def bwd(out: Tensor):
        def fn():
            if not a.requires_grad:
                return
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.accumulate_grad(np.broadcast_to(g, a.shape).copy())
        return fn

    return _make(a.data.sum(axis=axis, keepdims=keepdims), "sum", (a,), bwd)


def tmean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]

    def bwd(out: Tensor):
        def fn():
            if not a.requires_grad:
                return
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.accumulate_grad(np.broadcast_to(g, a.shape) / n)
        return fn

    return _make(a.data.mean(axis=axis, keepdims=keepdims), "mean", (a,), bwd)


def gather_rows(a, idx) -> Tensor:
    """Select rows ``a[idx]``; duplicates in ``idx`` are allowed."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                g = np.zeros_like(a.data)
                np.add.at(g, idx, out.grad)
                a.accumulate_grad(g)
        return fn

    return _make(a.data[idx], "gather_rows", (a,), bwd)


def scatter_rows(a, idx, n_rows: int) -> Tensor:
    """Place rows of ``a`` at positions ``idx`` (unique) in a zero matrix."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    data = np.zeros((n_rows,) + a.shape[1:], dtype=np.float64)
    data[idx] = a.data

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad[idx])
        return fn

    return _make(data, "scatter_rows", (a,), bwd)


def segment_sum(a, starts) -> Tensor:
    """Sum contiguous row segments of ``a``.

    ``starts`` are strictly increasing segment offsets with starts[0] == 0;
    empty segments are not supported (callers index only nonempty items).
    """
    a = as_tensor(a)
    starts = np.asarray(starts, dtype=np.intp)
    counts = np.diff(np.append(starts, a.shape[0]))

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(np.repeat(out.grad, counts, axis=0))
        return fn

    return _make(np.add.reduceat(a.data, starts, axis=0), "segment_sum", (a,), bwd)


def segment_softmax(a, starts) -> Tensor:
    """Column-wise softmax within contiguous row segments (max-subtracted)."""
    a = as_tensor(a)
    starts = np.asarray(starts, dtype=np.intp)
    counts = np.diff(np.append(starts, a.shape[0]))
    seg_max = np.repeat(np.maximum.reduceat(a.data, starts, axis=0), counts, axis=0)
    e = np.exp(a.data - seg_max)
    denom = np.repeat(np.add.reduceat(e, starts, axis=0), counts, axis=0)
    y = e / denom

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                gy = out.grad * y
                dot = np.repeat(np.add.reduceat(gy, starts, axis=0), counts, axis=0)
                a.accumulate_grad(gy - y * dot)
        return fn

    return _make(y, "segment_softmax", (a,), bwd)


# -- nonlinearities -------------------------------------------------------


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * mask)
        return fn

    return _make(np.where(mask, a.data, 0.0), "relu", (a,), bwd)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * y * (1.0 - y))
        return fn

    return _make(y, "sigmoid", (a,), bwd)


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * y)
        return fn

    return _make(y, "exp", (a,), bwd)


def log(a) -> Tensor:
    a = as_tensor(a)

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad / a.data)
        return fn

    return _make(np.log(a.data), "log", (a,), bwd)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * 0.5 / y)
        return fn

    return _make(y, "sqrt", (a,), bwd)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only strictly inside the bounds."""
    a = as_tensor(a)
    mask = (a.data > lo) & (a.data < hi)

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * mask)
        return fn

    return _make(np.clip(a.data, lo, hi), "clip", (a,), bwd)


# -- fused model primitives ------------------------------------------------


def softmax(a) -> Tensor:
    """Stable exp-normalize along the last axis; rejects non-finite input."""
    a = as_tensor(a)
    if not np.all(np.isfinite(a.data)):
        raise NumericsError("softmax: input contains NaN/Inf")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                g = out.grad
                dot = (g * y).sum(axis=-1, keepdims=True)
                a.accumulate_grad(y * (g - dot))
        return fn

    return _make(y, "softmax", (a,), bwd)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Row-wise layer normalization with population variance.

    1-D input is treated as a single row; gain/bias are 1-D over the last
    axis. ``out = gain * (x - mean) / sqrt(var + eps) + bias``.
    """
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise NumericsError(
            f"layer_norm: gain/bias length must be {d}, got {gain.shape} / {bias.shape}")
    if eps <= 0:
        raise NumericsError("layer_norm: eps must be positive")
    mean = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mean) * inv
    y = gain.data * xhat + bias.data

    def bwd(out: Tensor):
        def fn():
            g = out.grad
            if bias.requires_grad:
                bias.accumulate_grad(_unbroadcast(g, bias.shape))
            if gain.requires_grad:
                gain.accumulate_grad(_unbroadcast(g * xhat, gain.shape))
            if a.requires_grad:
                gg = g * gain.data
                m1 = gg.mean(axis=-1, keepdims=True)
                m2 = (gg * xhat).mean(axis=-1, keepdims=True)
                a.accumulate_grad((gg - m1 - xhat * m2) * inv)
        return fn

    return _make(y, "layer_norm", (a, gain, bias), bwd)


def batch_norm(a, gain, bias, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Column-wise batch normalization over the rows of a 2-D input.

    In training mode the batch statistics normalize and the running
    buffers are updated in place (population variance, like the rest of
    the package). In eval mode the running buffers are constants.
    """
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    if training:
        mean = a.data.mean(axis=0)
        var = a.data.var(axis=0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mean) * inv
    y = gain.data * xhat + bias.data

    def bwd(out: Tensor):
        def fn():
            g = out.grad
            if bias.requires_grad:
                bias.accumulate_grad(g.sum(axis=0))
            if gain.requires_grad:
                gain.accumulate_grad((g * xhat).sum(axis=0))
            if a.requires_grad:
                gg = g * gain.data
                if training:
                    m1 = gg.mean(axis=0)
                    m2 = (gg * xhat).mean(axis=0)
                    a.accumulate_grad((gg - m1 - xhat * m2) * inv)
                else:
                    a.accumulate_grad(gg * inv)
        return fn

    return _make(y, "batch_norm", (a, gain, bias), bwd)


def dropout(a, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    a = as_tensor(a)
    if rate == 0.0:
        return a
    keep = rng.random(a.shape) >= rate
    scale = 1.0 / (1.0 - rate)

    def bwd(out: Tensor):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * keep * scale)
        return fn

    return _make(np.where(keep, a.data * scale, 0.0), "dropout", (a,), bwd)
