"""Dense float64 tensors with taped reverse-mode differentiation.

Every trainable or guided quantity in this package flows through this
kernel.  The design is define-by-run: ops executed inside a ``with Tape()``
block record themselves onto that tape; a single reverse sweep then yields
gradients for any watched tensor.  Outside a tape, ops just compute values
(inference fast path).

Broadcasting is deliberately narrow to keep the kernel auditable:
elementwise ops accept equal shapes or a size-1 operand, matmul follows
numpy's batched-matrix convention, and any other shape alignment must go
through the explicit :func:`broadcast_to` op (whose adjoint is a sum).

All arrays are float64.  Forward values and gradients are bit-deterministic
for identical inputs on a single thread.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NonFiniteError",
    "TapeError",
    "tensor",
    "backward",
    "set_finite_checks",
    "add", "sub", "mul", "div", "neg", "matmul", "transpose", "reshape",
    "concat", "sum_", "mean", "amax", "amin", "abs_", "sqrt", "exp", "tanh",
    "sin", "cos", "arccos", "power", "gather", "broadcast_to",
    "stop_gradient", "layer_norm", "softmax",
]

ACOS_CLAMP = 1e-7  # arccos inputs clamped to [-1+ACOS_CLAMP, 1-ACOS_CLAMP]


class ShapeError(ValueError):
    """Operand shapes do not conform to the kernel's broadcast rules."""


class NonFiniteError(ArithmeticError):
    """A primitive op produced NaN or Inf."""


class TapeError(RuntimeError):
    """Backward requested for a tensor that never touched the tape."""


_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> bool:
    """Toggle the per-op NaN/Inf check; returns the previous setting."""
    global _FINITE_CHECKS
    prev = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return prev


_ACTIVE_TAPE: "Tape | None" = None


class Tensor:
    """A float64 numpy array plus a trainability flag.

    ``requires_grad`` marks a leaf as trainable; gradients are only tracked
    while a :class:`Tape` is active.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return _getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: tuple, vjp: Callable):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of primitive ops, consumed once by :func:`backward`.

    Tapes nest; the innermost active tape records.  A tensor is "on the
    tape" once it has been watched explicitly or consumed by a recorded op.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._known: dict[int, Tensor] = {}
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        return False

    def watch(self, t: Tensor) -> Tensor:
        t.requires_grad = True
        self._known[id(t)] = t
        return t

    def gradient(self, loss: Tensor, wrt: Sequence[Tensor]) -> list[Tensor]:
        if loss.data.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
        if id(loss) not in self._known:
            raise TapeError("loss was not produced on this tape")
        for w in wrt:
            if id(w) not in self._known:
                raise TapeError("gradient target is not on the tape")
        grads: dict[int, np.ndarray] = {
            id(loss): np.ones_like(loss.data)
        }
        for node in reversed(self.nodes):
            g_out = grads.pop(id(node.out), None)
            if g_out is None:
                continue
            partials = node.vjp(g_out)
            for inp, g in zip(node.inputs, partials):
                if g is None or not inp.requires_grad:
                    continue
                acc = grads.get(id(inp))
                if acc is None:
                    grads[id(inp)] = g
                else:
                    grads[id(inp)] = acc + g
        out = []
        for w in wrt:
            g = grads.get(id(w))
            if g is None:
                g = np.zeros_like(w.data)
            out.append(Tensor(g))
        return out


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def backward(loss: Tensor, wrt: Sequence[Tensor]) -> list[Tensor]:
    """Gradients of a scalar ``loss`` wrt each tensor in ``wrt``.

    Must be called while the recording tape is still active (or via
    ``tape.gradient`` afterwards).  Watched-but-unused targets get zero
    gradients; tensors that never touched the tape raise :class:`TapeError`.
    """
    if _ACTIVE_TAPE is None:
        raise TapeError("no active tape; record the loss inside `with Tape()`")
    return _ACTIVE_TAPE.gradient(loss, wrt)


# ---------------------------------------------------------------------------
# recording machinery


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(out_data: np.ndarray, inputs: tuple, vjp: Callable) -> Tensor:
    if _FINITE_CHECKS and not np.all(np.isfinite(out_data)):
        raise NonFiniteError("primitive op produced a non-finite value")
    out = Tensor.__new__(Tensor)
    out.data = out_data
    tape = _ACTIVE_TAPE
    if tape is not None and any(i.requires_grad for i in inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(out, inputs, vjp))
        known = tape._known
        for i in inputs:
            known[id(i)] = i
        known[id(out)] = out
    else:
        out.requires_grad = False
    return out


def _ew_shapes(a: Tensor, b: Tensor):
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ShapeError(
        f"elementwise op needs equal shapes or a scalar operand, got "
        f"{a.data.shape} and {b.data.shape}"
    )


def _unb_scalar(g: np.ndarray, shape) -> np.ndarray:
    # reduce a gradient back to a size-1 operand's shape
    if g.shape == tuple(shape):
        return g
    return np.asarray(g.sum()).reshape(shape)


def _unb_bcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    shape = tuple(shape)
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _ew_shapes(a, b)
    out = a.data + b.data

    def vjp(g):
        return (_unb_scalar(g, a.data.shape), _unb_scalar(g, b.data.shape))

    return _make(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _ew_shapes(a, b)
    out = a.data - b.data

    def vjp(g):
        return (_unb_scalar(g, a.data.shape), _unb_scalar(-g, b.data.shape))

    return _make(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _ew_shapes(a, b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unb_scalar(g * b.data, a.data.shape),
            _unb_scalar(g * a.data, b.data.shape),
        )

    return _make(out, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _ew_shapes(a, b)
    out = a.data / b.data

    def vjp(g):
        return (
            _unb_scalar(g / b.data, a.data.shape),
            _unb_scalar(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _make(out, (a, b), vjp)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}"
        )
    out = a.data @ b.data

    def vjp(g):
        ga = _unb_bcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unb_bcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return (ga, gb)

    return _make(out, (a, b), vjp)


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        if a.data.ndim < 2:
            raise ShapeError("default transpose needs >= 2 dims")
        axes = tuple(range(a.data.ndim - 2)) + (a.data.ndim - 1, a.data.ndim - 2)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.transpose(a.data, axes)

    def vjp(g):
        return (np.transpose(g, inv),)

    return _make(out, (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)
    out = a.data.reshape(shape)
    old = a.data.shape

    def vjp(g):
        return (g.reshape(old),)

    return _make(out, (a,), vjp)


def concat(parts, axis: int = 0) -> Tensor:
    ts = [_as_tensor(p) for p in parts]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        gs = []
        for i in range(len(ts)):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offsets[i], offsets[i + 1])
            gs.append(g[tuple(idx)])
        return tuple(gs)

    return _make(out, tuple(ts), vjp)


def _getitem(a: Tensor, key) -> Tensor:
    out = np.asarray(a.data[key])
    shape = a.data.shape

    def vjp(g):
        z = np.zeros(shape)
        z[key] += g
        return (z,)

    return _make(out, (a,), vjp)


def gather(a, indices, axis: int = 0) -> Tensor:
    """Select rows along ``axis`` by an integer index array (repeats allowed)."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    axis = axis % a.data.ndim
    moved = np.moveaxis(a.data, axis, 0)
    out = np.moveaxis(moved[idx], 0, axis)
    shape = a.data.shape

    moved_shape = (shape[axis],) + shape[:axis] + shape[axis + 1:]

    def vjp(g):
        z = np.zeros(moved_shape)
        np.add.at(z, idx, np.moveaxis(g, axis, 0))
        return (np.moveaxis(z, 0, axis),)

    return _make(out, (a,), vjp)


def broadcast_to(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)
    out = np.broadcast_to(a.data, shape).copy()
    old = a.data.shape

    def vjp(g):
        return (_unb_bcast(g, old),)

    return _make(out, (a,), vjp)


def stop_gradient(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor(a.data.copy())


# ---------------------------------------------------------------------------
# reductions


def _restore_axes(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if not keepdims and axis is not None:
        ax = axis if isinstance(axis, tuple) else (axis,)
        ax = tuple(a % len(shape) for a in ax)
        for a in sorted(ax):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))
    shape = a.data.shape

    def vjp(g):
        return (_restore_axes(g, shape, axis, keepdims).copy(),)

    return _make(out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))
    shape = a.data.shape
    count = a.data.size / max(out.size, 1)

    def vjp(g):
        return (_restore_axes(g, shape, axis, keepdims) / count,)

    return _make(out, (a,), vjp)


def _extreme(a, axis, keepdims, fn):
    a = _as_tensor(a)
    out = np.asarray(fn(a.data, axis=axis, keepdims=keepdims))
    shape = a.data.shape
    full = _restore_axes(out, shape, axis, keepdims)
    mask = (a.data == full).astype(np.float64)
    denom = np.asarray(mask.sum(axis=axis, keepdims=keepdims))

    def vjp(g):
        # ties share the incoming gradient equally (subgradient convention)
        spread = _restore_axes(g / denom, shape, axis, keepdims)
        return (mask * spread,)

    return _make(out, (a,), vjp)


def amax(a, axis=None, keepdims: bool = False) -> Tensor:
    return _extreme(a, axis, keepdims, np.max)


def amin(a, axis=None, keepdims: bool = False) -> Tensor:
    return _extreme(a, axis, keepdims, np.min)


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def abs_(a) -> Tensor:
    a = _as_tensor(a)
    out = np.abs(a.data)
    sgn = np.sign(a.data)  # sign(0) == 0: zero subgradient at ties

    def vjp(g):
        return (g * sgn,)

    return _make(out, (a,), vjp)


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _make(out, (a,), vjp)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _make(out, (a,), vjp)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), vjp)


def sin(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sin(a.data)
    c = np.cos(a.data)

    def vjp(g):
        return (g * c,)

    return _make(out, (a,), vjp)


def cos(a) -> Tensor:
    a = _as_tensor(a)
    out = np.cos(a.data)
    s = np.sin(a.data)

    def vjp(g):
        return (-g * s,)

    return _make(out, (a,), vjp)


def arccos(a) -> Tensor:
    """arccos with inputs clamped to +/-(1 - 1e-7); never raises on range.

    The derivative is evaluated at the clamped value, so it stays bounded
    near the endpoints instead of blowing up or flatlining.
    """
    a = _as_tensor(a)
    c = np.clip(a.data, -1.0 + ACOS_CLAMP, 1.0 - ACOS_CLAMP)
    out = np.arccos(c)
    d = -1.0 / np.sqrt(1.0 - c * c)

    def vjp(g):
        return (g * d,)

    return _make(out, (a,), vjp)


def power(a, p: float) -> Tensor:
    a = _as_tensor(a)
    p = float(p)
    out = a.data ** p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(out, (a,), vjp)


# ---------------------------------------------------------------------------
# composites (built from primitives; differentiate automatically)


def layer_norm(x, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance along ``axis`` (no affine)."""
    x = _as_tensor(x)
    mu = mean(x, axis=axis, keepdims=True)
    xc = sub(x, broadcast_to(mu, x.shape))
    var = mean(mul(xc, xc), axis=axis, keepdims=True)
    denom = sqrt(add(var, eps))
    return div(xc, broadcast_to(denom, x.shape))


def softmax(x, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; the max-shift is detached (exact identity)."""
    x = _as_tensor(x)
    shift = stop_gradient(amax(x, axis=axis, keepdims=True))
    e = exp(sub(x, broadcast_to(shift, x.shape)))
    total = sum_(e, axis=axis, keepdims=True)
    return div(e, broadcast_to(total, x.shape))
