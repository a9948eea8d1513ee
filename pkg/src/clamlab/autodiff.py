"""Dense float tensors with reverse-mode automatic differentiation.

The engine is deliberately small: a Tensor wraps a numpy array, every op is a
plain function that computes its forward value with numpy and appends one node
(output, parents, backward closure) to the active Tape. Nodes are appended in
execution order, so the record is already topologically sorted and backward()
is a single reverse sweep with gradient accumulation at fan-out points.

Values are float32 by default. float64 inputs are left alone so the
finite-difference oracle can run the exact same ops at reference precision.
There is no tape by default: ops called outside a ``with Tape():`` block are
pure forward computation (inference mode).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ShapeMismatchError

_FLOAT_DTYPES = (np.float32, np.float64)

_ACTIVE_TAPE: Optional["Tape"] = None


class Tensor:
    """A numpy array plus gradient slot and tape bookkeeping."""

    __slots__ = ("data", "requires_grad", "_grad", "_tracked", "_node_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._grad: Optional[np.ndarray] = None
        self._tracked = self.requires_grad
        self._node_tape: Optional["Tape"] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def grad(self) -> np.ndarray:
        """Accumulated gradient; zeros if nothing reached this tensor."""
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def _accumulate_grad(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self._grad += g

    def detach(self) -> "Tensor":
        """Same values, cut from the graph."""
        return Tensor(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data)

    def backward(self) -> None:
        """Reverse sweep from this scalar through the tape that recorded it."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        if self._node_tape is None:
            raise RuntimeError("backward() on a tensor that was not recorded on a tape")
        self._node_tape.backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # operator sugar; python scalars route to scale so graphs stay lean
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take_slice(self, key)


class _Node:
    __slots__ = ("out", "parents", "backward_fn")

    def __init__(self, out: Tensor, parents: tuple, backward_fn: Callable):
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn


class Tape:
    """Computation record for one forward/backward cycle.

    Exactly one tape may be active at a time; ops executed inside the
    ``with`` block append nodes here in execution order.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._used = False

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        if loss._node_tape is not self:
            raise ValueError("loss was recorded on a different tape")
        if self._used:
            raise RuntimeError("backward() already ran on this tape")
        self._used = True
        loss._accumulate_grad(np.ones_like(loss.data))
        for node in reversed(self._nodes):
            out_grad = node.out._grad
            if out_grad is None:
                continue  # not on any path to the loss
            grads = node.backward_fn(out_grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not parent._tracked:
                    continue
                parent._accumulate_grad(g)


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _record(out: Tensor, parents: tuple, backward_fn: Callable) -> Tensor:
    tape = _ACTIVE_TAPE
    if tape is None or not any(p._tracked for p in parents):
        return out
    out._tracked = True
    out._node_tape = tape
    tape._nodes.append(_Node(out, parents, backward_fn))
    return out


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatchError("matmul", a.shape, b.shape) from None
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)

    def backward(g):
        ga = _reduce_to(g @ bd.swapaxes(-1, -2), ad.shape)
        gb = _reduce_to(ad.swapaxes(-1, -2) @ g, bd.shape)
        return ga, gb

    return _record(out, (a, b), backward)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a, b)
    out = Tensor(a.data + b.data)

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _record(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("sub", a, b)
    out = Tensor(a.data - b.data)

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _record(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)

    def backward(g):
        return _reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)

    return _record(out, (a, b), backward)


def scale(x, factor: float) -> Tensor:
    x = _as_tensor(x)
    f = float(factor)
    out = Tensor(x.data * x.data.dtype.type(f))

    def backward(g):
        return (g * g.dtype.type(f),)

    return _record(out, (x,), backward)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    s = xd.dtype.type(slope)
    out = Tensor(np.where(xd >= 0, xd, xd * s))

    def backward(g):
        return (g * np.where(xd >= 0, g.dtype.type(1), g.dtype.type(slope)),)

    return _record(out, (x,), backward)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)
    out = Tensor(y)

    def backward(g):
        return (g * (1 - y * y),)

    return _record(out, (x,), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _record(out, (x,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatchError("layer_norm", x.shape, gamma.shape, beta.shape)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + xd.dtype.type(eps))
    xhat = xc * istd
    out = Tensor(xhat * gamma.data + beta.data)
    gd = gamma.data

    def backward(g):
        g_beta = _reduce_to(g, beta.shape)
        g_gamma = _reduce_to(g * xhat, gamma.shape)
        gxh = g * gd
        gx = istd * (
            gxh
            - gxh.mean(axis=-1, keepdims=True)
            - xhat * (gxh * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, g_gamma, g_beta

    return _record(out, (x, gamma, beta), backward)


def mse(pred, target) -> Tensor:
    """Mean squared error over all elements; shapes must match exactly."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError("mse", pred.shape, target.shape)
    diff = pred.data - target.data
    out = Tensor(np.asarray((diff * diff).mean()))
    n = diff.size

    def backward(g):
        gp = (2.0 / n) * diff * g
        return gp, -gp

    return _record(out, (pred, target), backward)


def mean(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.asarray(x.data.mean()))
    n = x.data.size
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(g / n, shape).astype(g.dtype, copy=False),)

    return _record(out, (x,), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [_as_tensor(t) for t in tensors]
    if not parts:
        raise ValueError("concat of an empty sequence")
    ref = parts[0]
    ax = axis % ref.ndim if ref.ndim else 0
    for p in parts[1:]:
        if p.ndim != ref.ndim:
            raise ShapeMismatchError("concat", ref.shape, p.shape)
        for i in range(ref.ndim):
            if i != ax and p.shape[i] != ref.shape[i]:
                raise ShapeMismatchError("concat", ref.shape, p.shape)
    out = Tensor(np.concatenate([p.data for p in parts], axis=ax))
    sizes = [p.shape[ax] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=ax))

    return _record(out, tuple(parts), backward)


def take_slice(x, key) -> Tensor:
    """Basic indexing (ints, slices, tuples thereof) as a differentiable op."""
    x = _as_tensor(x)
    out = Tensor(x.data[key])
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.add.at(gx, key, g)
        return (gx,)

    return _record(out, (x,), backward)


def embedding_lookup(table, indices) -> Tensor:
    """Gather rows of ``table``; gradients accumulate on repeated indices."""
    table = _as_tensor(table)
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError(f"embedding_lookup indices must be integers, got {idx.dtype}")
    if table.ndim != 2:
        raise ShapeMismatchError("embedding_lookup", table.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(
            f"embedding_lookup: index out of range for table with {table.shape[0]} rows"
        )
    out = Tensor(table.data[idx])
    shape = table.shape

    def backward(g):
        gt = np.zeros(shape, dtype=g.dtype)
        np.add.at(gt, idx, g)
        return (gt,)

    return _record(out, (table,), backward)


def reshape(x, shape: tuple) -> Tensor:
    x = _as_tensor(x)
    if int(np.prod(shape)) != x.data.size:
        raise ShapeMismatchError("reshape", x.shape, shape)
    out = Tensor(x.data.reshape(shape))
    orig = x.shape

    def backward(g):
        return (g.reshape(orig),)

    return _record(out, (x,), backward)


def transpose(x, axes: Optional[tuple] = None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatchError("transpose", x.shape, axes)
    out = Tensor(x.data.transpose(axes))
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return _record(out, (x,), backward)
