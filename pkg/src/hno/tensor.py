"""Dense tensors with reverse-mode automatic differentiation.

A `Tensor` wraps a contiguous numpy array (float32 or float64) plus an optional
gradient buffer. Operations executed inside a `with Tape():` block are recorded
on that tape in creation order; `backward(root)` replays the records in reverse,
accumulating gradients additively so shared subexpressions receive the sum over
all fan-out paths. Outside a tape, the same functions compute values without
recording, which is the evaluation mode.

Gradient buffers of intermediate results are freed as soon as the reverse walk
has propagated through them; leaf tensors (parameters, inputs) keep `.grad`, and
repeated backward calls accumulate into it until the caller resets it.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf as _erf

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "DtypeError",
    "tensor",
    "backward",
    "record_operation",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "sin",
    "sqrt",
    "gelu",
    "matmul",
    "layer_norm",
    "softmax",
    "dropout",
    "tsum",
    "tmean",
    "reshape",
    "transpose",
    "concat",
    "zero_grads",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class DtypeError(TypeError):
    """Raised when operand dtypes are incompatible or unsupported."""


_ALLOWED = (np.float32, np.float64)


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in [np.dtype(d) for d in _ALLOWED]:
        if not (np.issubdtype(arr.dtype, np.integer) or np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.bool_)):
            raise DtypeError(f"unsupported dtype {arr.dtype}; expected float32 or float64")
        arr = arr.astype(np.float64)
    # ascontiguousarray would promote 0-d scalars to shape (1,)
    return arr if arr.ndim == 0 else np.ascontiguousarray(arr)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_produced", "_retain", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._produced = False
        self._retain = False
        self._tape: "Tape | None" = None

    # -- introspection ------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._produced

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._non_scalar()

    def _non_scalar(self):
        raise ShapeError(f"item() requires a single-element tensor, got shape {self.shape}")

    def numpy(self) -> np.ndarray:
        return self.data

    def retain_grad(self) -> "Tensor":
        self._retain = True
        return self

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    # -- operator sugar ------------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

class _Record:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations; creation order is topological."""

    def __init__(self):
        self._records: list[_Record] = []

    def __len__(self) -> int:
        return len(self._records)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def record(self, out: Tensor, inputs: tuple, backward_fn) -> None:
        self._records.append(_Record(out, inputs, backward_fn))
        out._produced = True
        out._tape = self

    def backward(self, root: Tensor) -> None:
        """One-shot reverse sweep; records are released as they are consumed
        so closure-captured buffers free as early as possible."""
        if root.size != 1:
            raise ShapeError(f"backward root must be a scalar, got shape {root.shape}")
        if not root._produced or root._tape is not self:
            raise ValueError("backward root was not produced by operations recorded on this tape")
        _accumulate(root, np.ones_like(root.data))
        for rec in reversed(self._records):
            g = rec.out.grad
            if g is not None:
                grads = rec.backward_fn(g)
                for inp, ginp in zip(rec.inputs, grads):
                    if ginp is not None and isinstance(inp, Tensor) and inp.requires_grad:
                        _accumulate(inp, ginp)
                if not rec.out._retain:
                    rec.out.grad = None
            rec.backward_fn = None
            rec.inputs = ()
        self._records.clear()

    def clear(self) -> None:
        self._records.clear()


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def backward(root: Tensor) -> None:
    """Reverse-mode sweep from a scalar root to every reachable leaf."""
    if root._tape is None:
        raise ValueError("backward root was not produced by recorded operations (no tape)")
    root._tape.backward(root)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=t.dtype, copy=True)
    else:
        t.grad += g


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def record_operation(out_data: np.ndarray, inputs: tuple, backward_fn) -> Tensor:
    """Wrap a computed array as a Tensor, recording a custom backward rule.

    `backward_fn(grad_out) -> tuple of gradients aligned with `inputs``
    (entries may be None). Recording only happens when a tape is active and
    some input requires grad; otherwise the result is a plain value.
    """
    req = any(isinstance(i, Tensor) and i.requires_grad for i in inputs)
    out = Tensor(out_data)
    tape = _active_tape()
    if req and tape is not None:
        out.requires_grad = True
        tape.record(out, tuple(inputs), backward_fn)
    return out


# ---------------------------------------------------------------------------
# Coercion and broadcasting helpers
# ---------------------------------------------------------------------------

def _coerce(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _coerce_pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, _coerce(b, a)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return _coerce(a, b), b
    a, b = _coerce(a), _coerce(b)
    if a.dtype != b.dtype:
        raise DtypeError(f"dtype mismatch: {a.dtype.name} vs {b.dtype.name}")
    return a, b


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over axes that were broadcast up from `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise operations
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _broadcast_shape(a, b)
    return record_operation(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _broadcast_shape(a, b)
    return record_operation(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _broadcast_shape(a, b)
    return record_operation(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _broadcast_shape(a, b)
    out = a.data / b.data
    return record_operation(
        out, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = _coerce(a)
    return record_operation(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = _coerce(a)
    out = np.exp(a.data)
    return record_operation(out, (a,), lambda g: (g * out,))


def sin(a) -> Tensor:
    a = _coerce(a)
    return record_operation(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def sqrt(a) -> Tensor:
    a = _coerce(a)
    out = np.sqrt(a.data)
    return record_operation(out, (a,), lambda g: (g * (0.5 / out),))


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a) -> Tensor:
    """x * Phi(x) with the exact Gaussian CDF Phi."""
    a = _coerce(a)
    x = a.data
    cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    out = (x * cdf).astype(x.dtype, copy=False)

    def bwd(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf).astype(x.dtype, copy=False),)

    return record_operation(out, (a,), bwd)


# ---------------------------------------------------------------------------
# Contractions and fused layers
# ---------------------------------------------------------------------------

def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def _unbroadcast_batch(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce matmul batch dims of g down to `shape` (last two dims match)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i in range(g.ndim - 2) if shape[i] == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def matmul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")

    def bwd(g):
        da = _unbroadcast_batch(np.matmul(g, _swap_last(b.data)), a.shape)
        db = _unbroadcast_batch(np.matmul(_swap_last(a.data), g), b.shape)
        return da, db

    return record_operation(np.matmul(a.data, b.data), (a, b), bwd)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _coerce(x), _coerce(gain), _coerce(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}")
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bwd(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        red = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=red)
        dbias = g.sum(axis=red)
        return dx.astype(x.dtype, copy=False), dgain, dbias

    return record_operation(out.astype(x.dtype, copy=False), (x, gain, bias), bwd)


def softmax(x, axis: int = -1) -> Tensor:
    x = _coerce(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return record_operation(out, (x,), bwd)


def dropout(x, rate: float, rng: np.random.Generator | None = None,
            training: bool = False) -> Tensor:
    """Inverted dropout: scale by 1/(1-rate) in training, identity at eval."""
    x = _coerce(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout requires an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / np.asarray(1.0 - rate, dtype=x.dtype)
    return record_operation(x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# Reductions and shape operations
# ---------------------------------------------------------------------------

def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _coerce(x)
    axes = _axis_tuple(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=False),)

    return record_operation(np.asarray(out, dtype=x.dtype), (x,), bwd)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _coerce(x)
    axes = _axis_tuple(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype, copy=False),)

    return record_operation(np.asarray(out, dtype=x.dtype), (x,), bwd)


def reshape(x, shape) -> Tensor:
    x = _coerce(x)
    return record_operation(
        x.data.reshape(shape), (x,),
        lambda g: (g.reshape(x.shape),),
    )


def transpose(x, axes=None) -> Tensor:
    x = _coerce(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return record_operation(
        np.ascontiguousarray(x.data.transpose(axes)), (x,),
        lambda g: (np.ascontiguousarray(g.transpose(inverse)),),
    )


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    if len({t.dtype for t in ts}) > 1:
        raise DtypeError("concat requires matching dtypes, got "
                         + ", ".join(t.dtype.name for t in ts))
    axis = axis % ts[0].ndim
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        pieces = []
        for i in range(len(ts)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            pieces.append(np.ascontiguousarray(g[tuple(sl)]))
        return tuple(pieces)

    return record_operation(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bwd)


def _getitem(x: Tensor, key) -> Tensor:
    x = _coerce(x)
    out = x.data[key]
    if np.isscalar(out) or out.ndim == 0:
        out = np.asarray(out, dtype=x.dtype)

    def bwd(g):
        dx = np.zeros_like(x.data)
        dx[key] += g
        return (dx,)

    return record_operation(np.ascontiguousarray(out), (x,), bwd)
