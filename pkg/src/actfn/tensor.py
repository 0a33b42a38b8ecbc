"""Dense tensors with define-by-run reverse-mode differentiation.

Every op records a node holding its parents and a closure that maps the
upstream gradient to one gradient per parent.  :func:`backward` walks the
nodes in reverse topological order and then frees them, so each forward
graph supports exactly one backward pass.

All 4-D tensors follow the NCHW convention.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NonFiniteError, ShapeError, TapeError

__all__ = [
    "Tensor",
    "RunningStats",
    "no_grad",
    "is_grad_enabled",
    "elementwise",
    "conv2d",
    "avg_pool2d",
    "dense",
    "batch_norm",
    "dropout",
    "softmax",
    "softmax_cross_entropy",
    "concat",
    "reshape",
    "flatten",
    "tensor_sum",
    "tensor_mean",
    "backward",
    "topological_order",
]

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class _Node:
    __slots__ = ("op", "parents", "backward_fn")

    def __init__(self, op: str, parents: tuple, backward_fn: Callable):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn


class Tensor:
    """N-dimensional real array that can take part in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_node", "_consumed", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None
        self._consumed = False

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
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    # Operator sugar; the right-hand operand follows the trailing-dimension rule.
    def __add__(self, other):
        return elementwise("add", self, other)

    def __radd__(self, other):
        return elementwise("add", self, other)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __rsub__(self, other):
        return elementwise("add", elementwise("neg", self), other)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        return elementwise("mul", self, other)

    def __truediv__(self, other):
        return elementwise("div", self, other)

    def __neg__(self):
        return elementwise("neg", self)

    def __pow__(self, exponent):
        if exponent != 2:
            raise NotImplementedError("only x**2 is supported")
        return elementwise("square", self)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return tensor_mean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced a non-finite value")


def _make(data: np.ndarray, op: str, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    _check_finite(data, op)
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = _Node(op, tuple(parents), backward_fn)
    return out


def _trailing_compatible(a_shape: tuple, b_shape: tuple) -> bool:
    if len(b_shape) > len(a_shape):
        return False
    for da, db in zip(a_shape[::-1], b_shape[::-1]):
        if db != da and db != 1:
            return False
    return True


def _reduce_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    lead = grad.ndim - len(shape)
    if lead:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


_UNARY = {
    "neg": (np.negative, lambda x, g: -g),
    "abs": (np.abs, lambda x, g: g * np.where(x >= 0, 1.0, -1.0)),
    "square": (np.square, lambda x, g: g * 2.0 * x),
    "exp": (np.exp, lambda x, g: g * np.exp(x)),
}
_BINARY = ("add", "sub", "mul", "div")


def elementwise(op_kind: str, a, b=None) -> Tensor:
    """Apply a unary or binary elementwise op.

    ``b`` may broadcast onto ``a`` only by the trailing-dimension rule: its
    shape must be a suffix of ``a``'s shape, each extent equal or 1.
    """
    a = _as_tensor(a)
    if op_kind in _UNARY:
        if b is not None:
            raise ShapeError(f"{op_kind} is unary")
        fwd, bwd = _UNARY[op_kind]
        x = a.data
        with np.errstate(all="ignore"):
            out = fwd(x)
        return _make(out, op_kind, (a,), lambda g: (bwd(x, g),))
    if op_kind not in _BINARY:
        raise ValueError(f"unknown elementwise op {op_kind!r}")
    if b is None:
        raise ShapeError(f"{op_kind} needs two operands")
    b = _as_tensor(b)
    if not _trailing_compatible(a.shape, b.shape):
        raise ShapeError(f"{op_kind}: cannot broadcast {b.shape} onto {a.shape}")
    x, y = a.data, b.data
    with np.errstate(all="ignore"):
        if op_kind == "add":
            out = x + y
        elif op_kind == "sub":
            out = x - y
        elif op_kind == "mul":
            out = x * y
        else:
            out = x / y

    def bwd(g):
        if op_kind == "add":
            ga, gb = g, g
        elif op_kind == "sub":
            ga, gb = g, -g
        elif op_kind == "mul":
            ga, gb = g * y, g * x
        else:
            ga, gb = g / y, -g * x / (y * y)
        return ga, _reduce_to(gb, b.shape)

    return _make(out, op_kind, (a, b), bwd)


def tensor_sum(x: Tensor) -> Tensor:
    shape = x.shape
    return _make(np.asarray(x.data.sum()), "sum", (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def tensor_mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return _make(np.asarray(x.data.mean()), "mean", (x,), lambda g: (np.full(shape, g / n, dtype=x.dtype),))


def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), "reshape", (x,), lambda g: (g.reshape(old),))


def flatten(x: Tensor) -> Tensor:
    """Collapse every axis but the first."""
    return reshape(x, (x.shape[0], -1))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(ref, t.shape)) if i != axis % len(ref)
        ):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape}")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(out, "concat", tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def _pair(v) -> tuple:
    if isinstance(v, (int, np.integer)):
        return (int(v), int(v))
    return (int(v[0]), int(v[1]))


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride=(1, 1), padding=(0, 0)) -> Tensor:
    """2-D cross-correlation of ``x[N,C,H,W]`` with ``kernel[F,C,kh,kw]``."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if sh <= 0 or sw <= 0:
        raise ValueError("stride must be positive")
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and kernel")
    n, c, h, w = x.shape
    f, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {kc}")
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}")
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]  # N,C,Ho,Wo,kh,kw
    kd = kernel.data
    out = np.tensordot(cols, kd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    parents = [x, kernel]
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (f,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} != ({f},)")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)
    out = np.ascontiguousarray(out)

    def bwd(g):
        gk = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3])) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = np.tensordot(kd, g, axes=([0], [1]))  # C,kh,kw,N,Ho,Wo
            gxp = np.zeros((c, n) + xp.shape[2:], dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += gcols[:, i, j]
            gxp = gxp.transpose(1, 0, 2, 3)
            gx = gxp[:, :, ph : ph + h, pw : pw + w]
        grads = [gx, gk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _make(out, "conv2d", parents, bwd)


def avg_pool2d(x: Tensor, window, stride=None) -> Tensor:
    """Mean over each (wh, ww) window; stride defaults to the window."""
    x = _as_tensor(x)
    wh, ww = _pair(window)
    sh, sw = _pair(stride) if stride is not None else (wh, ww)
    if x.ndim != 4:
        raise ShapeError("avg_pool2d expects a 4-D input")
    n, c, h, w = x.shape
    if wh > h or ww > w:
        raise ShapeError(f"avg_pool2d: window {wh}x{ww} exceeds input {h}x{w}")
    if sh <= 0 or sw <= 0:
        raise ValueError("stride must be positive")
    ho = (h - wh) // sh + 1
    wo = (w - ww) // sw + 1
    area = wh * ww
    if (sh, sw) == (wh, ww) and h % wh == 0 and w % ww == 0:
        out = x.data.reshape(n, c, ho, wh, wo, ww).mean(axis=(3, 5))
    else:
        out = sliding_window_view(x.data, (wh, ww), axis=(2, 3))[:, :, ::sh, ::sw].mean(axis=(4, 5))

    def bwd(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        share = g / area
        for i in range(wh):
            for j in range(ww):
                gx[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += share
        return (gx,)

    return _make(out, "avg_pool2d", (x,), bwd)


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight + bias`` for ``x[N,D]`` and ``weight[D,K]``."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: cannot multiply {x.shape} by {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd
    parents = [x, weight]
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"dense: bias shape {bias.shape} != ({weight.shape[1]},)")
        out = out + bias.data
        parents.append(bias)

    def bwd(g):
        grads = [g @ wd.T, xd.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return tuple(grads)

    return _make(out, "dense", parents, bwd)


class RunningStats:
    """Per-channel running mean/variance used by :func:`batch_norm` in eval mode."""

    __slots__ = ("mean", "var")

    def __init__(self, mean=None, var=None):
        self.mean = None if mean is None else np.asarray(mean, dtype=float)
        self.var = None if var is None else np.asarray(var, dtype=float)

    @classmethod
    def initialized(cls, channels: int, dtype=np.float64) -> "RunningStats":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))

    @property
    def ready(self) -> bool:
        return self.mean is not None and self.var is not None

    def copy(self) -> "RunningStats":
        return RunningStats(None if self.mean is None else self.mean.copy(), None if self.var is None else self.var.copy())


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: RunningStats,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize over the channel axis (axis 1) of a 2-D or 4-D input."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim == 4:
        axes, bshape = (0, 2, 3), (1, -1, 1, 1)
    elif x.ndim == 2:
        axes, bshape = (0,), (1, -1)
    else:
        raise ShapeError("batch_norm expects a 2-D or 4-D input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batch_norm: gamma/beta must have shape ({c},)")
    xd = x.data
    gd = gamma.data.reshape(bshape)

    if train:
        m = xd.size // c
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        if running.ready:
            unbiased = var * m / (m - 1) if m > 1 else var
            running.mean = (1 - momentum) * running.mean + momentum * mean
            running.var = (1 - momentum) * running.var + momentum * unbiased
        else:
            running.mean, running.var = mean.copy(), var.copy()
    else:
        if not running.ready:
            raise RuntimeError("batch_norm: eval mode before running statistics exist")
        mean, var = running.mean, running.var

    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean.reshape(bshape)) * invstd.reshape(bshape)
    out = gd * xhat + beta.data.reshape(bshape)

    def bwd(g):
        gxhat = g * gd
        if train:
            m = xd.size // c
            s1 = gxhat.sum(axis=axes).reshape(bshape)
            s2 = (gxhat * xhat).sum(axis=axes).reshape(bshape)
            gx = invstd.reshape(bshape) / m * (m * gxhat - s1 - xhat * s2)
        else:
            gx = gxhat * invstd.reshape(bshape)
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _make(out, "batch_norm", (x, gamma, beta), bwd)


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _make(x.data * mask, "dropout", (x,), lambda g: (g * mask,))


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    x = _as_tensor(x)
    p = _softmax_rows(x.data)
    return _make(p, "softmax", (x,), lambda g: (p * (g - (g * p).sum(axis=-1, keepdims=True)),))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of max-shifted softmax against integer labels."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n, k = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = np.mean(logsum - shifted[rows, labels])

    def bwd(g):
        p = np.exp(shifted - logsum[:, None])
        p[rows, labels] -= 1.0
        return (g * p / n,)

    return _make(np.asarray(loss, dtype=z.dtype), "softmax_cross_entropy", (logits,), bwd)


def topological_order(root: Tensor) -> list:
    """Tensors reachable from ``root`` with every input before its consumers."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for p in t._node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf, then free the graph."""
    if loss.shape != ():
        raise TapeError(f"backward needs a scalar root, got shape {loss.shape}")
    if loss._consumed:
        raise TapeError("this graph was already consumed by a previous backward pass")
    if not loss.requires_grad:
        raise TapeError("root does not require grad")
    order = topological_order(loss)
    grads = {id(loss): np.ones((), dtype=loss.dtype)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t._node
        if node is None:
            t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        for p, gp in zip(node.parents, node.backward_fn(g)):
            if gp is None or not p.requires_grad:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = gp if prev is None else prev + gp
    for t in order:
        if t._node is not None:
            t._node = None
            t._consumed = True
