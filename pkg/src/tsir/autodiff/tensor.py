"""Dense tensors with tape-based reverse-mode differentiation.

Operations append a node to the thread's active :class:`Tape` whenever an
input requires a gradient. :func:`backward` walks that tape in exact reverse
order of recording.
"""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from ..errors import InvalidArgument, NumericError

DTYPE = np.float64
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple["Tensor", ...]
    output: "Tensor"
    backward: Callable[[np.ndarray], tuple]
    tape: "Tape"


class Tape:
    """Ordered record of operations; append order is a topological order."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def reset(self):
        for node in self.nodes:
            node.output.node = None
        self.nodes.clear()


class _State(threading.local):
    def __init__(self):
        self.tapes: list[Tape] = [Tape()]
        self.enabled = True
        self.check_finite = True
        self.kinks: list | None = None


_state = _State()


def active_tape() -> Tape:
    return _state.tapes[-1]


@contextlib.contextmanager
def recording(tape: Tape | None = None):
    """Record onto ``tape`` (a fresh one by default) for the duration of the block."""
    tape = Tape() if tape is None else tape
    _state.tapes.append(tape)
    try:
        yield tape
    finally:
        _state.tapes.pop()


@contextlib.contextmanager
def track_kinks():
    """Collect, for every non-smooth op run inside the block, its distance to a kink.

    Yields a list that receives one float per op call: the smallest ``|x|``
    for relu/abs, or the smallest top-two gap per window for max pooling.
    Finite-difference checks are only meaningful when these stay well above ``h``.
    """
    prev = _state.kinks
    _state.kinks = []
    try:
        yield _state.kinks
    finally:
        _state.kinks = prev


def _note_kink(margin: float):
    if _state.kinks is not None:
        _state.kinks.append(float(margin))


@contextlib.contextmanager
def no_grad():
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
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
        if isinstance(other, Tensor):
            raise InvalidArgument("division is only defined by constants")
        return mul(self, 1.0 / np.asarray(other, dtype=DTYPE))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite(op: str, out: np.ndarray):
    if _state.check_finite and not np.isfinite(out).all():
        raise NumericError(f"non-finite output from op '{op}'")


def _record(op: str, out: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    _finite(op, out)
    res = Tensor(out)
    if _state.enabled and any(t.requires_grad for t in inputs):
        res.requires_grad = True
        tape = active_tape()
        node = Node(op, tuple(inputs), res, backward, tape)
        res.node = node
        tape.nodes.append(node)
    return res


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(op: str, *shapes):
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise InvalidArgument(f"{op}: incompatible shapes {shapes}") from None


# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _record("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _record("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def back(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _record("mul", ad * bd, (a, b), back)


def add_bias(x, bias) -> Tensor:
    """Add a bias vector along the last axis."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.ndim != 1 or bias.shape[0] != x.shape[-1]:
        raise InvalidArgument(f"add_bias: bias {bias.shape} does not match last axis of {x.shape}")
    return add(x, bias)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise InvalidArgument(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise InvalidArgument(f"matmul: incompatible batch shapes {a.shape} @ {b.shape}") from None
    ad, bd = a.data, b.data
    # a stack times a matrix: fold the batch axes into one gemm
    fold = bd.ndim == 2 and ad.ndim > 2

    def back(g):
        ga = gb = None
        if a.requires_grad:
            if fold:
                ga = (g.reshape(-1, g.shape[-1]) @ bd.T).reshape(ad.shape)
            else:
                ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    if fold:
        out = (ad.reshape(-1, ad.shape[-1]) @ bd).reshape(ad.shape[:-1] + (bd.shape[-1],))
    else:
        out = ad @ bd
    return _record("matmul", out, (a, b), back)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    out = matmul(x, weight)
    return out if bias is None else add_bias(out, bias)


# shape manipulation


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise InvalidArgument(f"transpose: bad axes {axes} for shape {x.shape}")
    inv = tuple(np.argsort(axes))
    return _record("transpose", np.transpose(x.data, axes), (x,),
                   lambda g: (np.transpose(g, inv),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise InvalidArgument(f"reshape: cannot reshape {x.shape} to {shape}") from None
    src = x.shape
    return _record("reshape", out, (x,), lambda g: (g.reshape(src),))


def slice_(x, idx) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data[idx]
    except IndexError as exc:
        raise InvalidArgument(f"slice: {exc}") from None
    src = x.shape

    def back(g):
        full = np.zeros(src, dtype=DTYPE)
        if _has_fancy(idx):
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return (full,)

    return _record("slice", np.array(out, dtype=DTYPE), (x,), back)


def _has_fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise InvalidArgument("concat: empty input")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise InvalidArgument(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _record("concat", out, ts, lambda g: tuple(np.split(g, bounds, axis=axis)))


# reductions


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    src = x.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _record("sum", np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), back)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        try:
            count = int(np.prod([src[a] for a in axes]))
        except IndexError:
            raise InvalidArgument(f"mean: axis {axis} out of range for {src}") from None

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, src).copy(),)

    return _record("mean", np.asarray(x.data.mean(axis=axis, keepdims=keepdims)), (x,), back)


# pointwise nonlinearities


def relu(x) -> Tensor:
    x = as_tensor(x)
    _note_kink(np.abs(x.data).min(initial=np.inf))
    mask = x.data > 0
    return _record("relu", x.data * mask, (x,), lambda g: (g * mask,))


def gelu(x) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))

    def back(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
        return (g * (cdf + xd * pdf),)

    return _record("gelu", xd * cdf, (x,), back)


def abs_(x) -> Tensor:
    """Absolute value; the subgradient at zero is taken as zero."""
    x = as_tensor(x)
    _note_kink(np.abs(x.data).min(initial=np.inf))
    sign = np.sign(x.data)
    return _record("abs", np.abs(x.data), (x,), lambda g: (g * sign,))


def square(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _record("square", xd * xd, (x,), lambda g: (2.0 * g * xd,))


def _check_axis(op, x, axis):
    if not -x.ndim <= axis < x.ndim:
        raise InvalidArgument(f"{op}: axis {axis} invalid for shape {x.shape}")


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _check_axis("softmax", x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _record("softmax", s, (x,), back)


def layer_norm(x, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Standardize along ``axis`` (no affine part)."""
    x = as_tensor(x)
    _check_axis("layer_norm", x, axis)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def back(g):
        gm = g.mean(axis=axis, keepdims=True)
        gy = (g * y).mean(axis=axis, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _record("layer_norm", y, (x,), back)


def max_pool1d(x, kernel: int) -> Tensor:
    """Non-overlapping max pooling over the last axis (stride = kernel, ceil mode)."""
    x = as_tensor(x)
    if kernel < 1:
        raise InvalidArgument(f"max_pool1d: kernel must be >= 1, got {kernel}")
    if kernel == 1:
        return _record("max_pool1d", x.data.copy(), (x,), lambda g: (g,))
    n = x.shape[-1]
    n_out = -(-n // kernel)
    pad = n_out * kernel - n
    xd = x.data
    if pad:
        xd = np.concatenate(
            [xd, np.full(xd.shape[:-1] + (pad,), -np.inf, dtype=DTYPE)], axis=-1
        )
    win = xd.reshape(xd.shape[:-1] + (n_out, kernel))
    if _state.kinks is not None:
        top2 = np.sort(win, axis=-1)[..., -2:]
        _note_kink(np.min(top2[..., 1] - top2[..., 0]))
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    src = x.shape

    def back(g):
        full = np.zeros(src[:-1] + (n_out, kernel), dtype=DTYPE)
        np.put_along_axis(full, arg[..., None], g[..., None], axis=-1)
        return (full.reshape(src[:-1] + (n_out * kernel,))[..., :n],)

    return _record("max_pool1d", out, (x,), back)


# losses


def mae_loss(pred, target) -> Tensor:
    return mean(abs_(sub(pred, target)))


def mse_loss(pred, target) -> Tensor:
    return mean(square(sub(pred, target)))


# differentiation


def backward(loss: Tensor, retain: bool = False) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf requiring grad.

    Returns a map from leaf tensor to its gradient. The recording tape is
    cleared afterwards unless ``retain`` is set.
    """
    if loss.size != 1:
        raise InvalidArgument(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        raise InvalidArgument("loss was not recorded on any tape")
    tape = loss.node.tape

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=DTYPE)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if inp.node is None:
                leaves[key] = inp
    result = {}
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g if leaf.grad is None else leaf.grad + g
        result[leaf] = g
    if not retain:
        tape.reset()
    return result
