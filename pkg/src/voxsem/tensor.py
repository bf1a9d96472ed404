"""Reverse-mode automatic differentiation over dense numpy arrays.

A :class:`Tensor` wraps an ndarray together with its position in the
differentiation graph. Every operation records its parent tensors and a
gradient closure; :func:`backward` walks the recorded graph once in
reverse topological order and accumulates gradients into every tensor
that requires them.

Only float32 and float64 data is supported. Verification code should
stay in float64; float32 exists to cut training time.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import NumericError, ShapeError

Array = np.ndarray

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def _as_array(data) -> Array:
    arr = np.asarray(data)
    if arr.dtype in _FLOAT_DTYPES:
        return arr
    return arr.astype(np.float64)


class Tensor:
    """Dense array node in the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data: Array = _as_array(data)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[Array], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same data, severed from the graph. Gradients stop here."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # Arithmetic sugar; the module-level functions do the real work.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_coerce(other), -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def sum(self) -> "Tensor":
        return reduce_sum(self)

    def mean(self) -> "Tensor":
        return reduce_mean(self)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)


def _coerce(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: Array, parents: tuple[Tensor, ...], grad_fn: Callable[[Array], None]) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
    return out


def accumulate_grad(t: Tensor, g: Array) -> None:
    """Add a gradient contribution to ``t``. No-op for frozen tensors."""
    if not t.requires_grad:
        return
    if t.grad is None:
        # copy: g may alias a buffer the caller keeps mutating
        t.grad = np.array(g)
    else:
        t.grad += g


def _suffix_axes(big: tuple[int, ...], small: tuple[int, ...]) -> tuple[int, ...]:
    """Leading axes of ``big`` that a trailing-suffix ``small`` spans."""
    lead = len(big) - len(small)
    if lead < 0 or big[lead:] != small:
        raise ShapeError(
            f"shapes {big} and {small} do not align; only equal shapes or a "
            "trailing suffix (e.g. a per-channel bias) may combine"
        )
    return tuple(range(lead))


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim < b.data.ndim:
        a, b = b, a
    axes = _suffix_axes(a.shape, b.shape)

    def grad_fn(g: Array) -> None:
        accumulate_grad(a, g)
        accumulate_grad(b, g.sum(axis=axes) if axes else g)

    return _make(a.data + b.data, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim < b.data.ndim:
        a, b = b, a
    axes = _suffix_axes(a.shape, b.shape)

    def grad_fn(g: Array) -> None:
        accumulate_grad(a, g * b.data)
        gb = g * a.data
        accumulate_grad(b, gb.sum(axis=axes) if axes else gb)

    return _make(a.data * b.data, (a, b), grad_fn)


def log(x: Tensor) -> Tensor:
    x = _coerce(x)

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, g / x.data)

    return _make(np.log(x.data), (x,), grad_fn)


def exp(x: Tensor) -> Tensor:
    x = _coerce(x)
    out_data = np.exp(x.data)

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, g * out_data)

    return _make(out_data, (x,), grad_fn)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; the gradient passes only through the interior."""
    x = _coerce(x)
    inside = (x.data >= lo) & (x.data <= hi)

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, g * inside)

    return _make(np.clip(x.data, lo, hi), (x,), grad_fn)


def reduce_sum(x: Tensor) -> Tensor:
    x = _coerce(x)

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, np.broadcast_to(g, x.shape))

    return _make(x.data.sum(), (x,), grad_fn)


def reduce_mean(x: Tensor) -> Tensor:
    x = _coerce(x)
    n = x.data.size

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, np.broadcast_to(g / n, x.shape))

    return _make(x.data.mean(), (x,), grad_fn)


def reshape(x: Tensor, shape) -> Tensor:
    x = _coerce(x)
    shape = tuple(int(s) for s in (shape if isinstance(shape, (tuple, list)) else (shape,)))
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} ({x.size} elements) to {shape}")
    old_shape = x.shape

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, g.reshape(old_shape))

    return _make(x.data.reshape(shape), (x,), grad_fn)


def topo_order(root: Tensor) -> list[Tensor]:
    """Graph nodes reachable from ``root``, every parent before its child."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, leaves: Iterable[Tensor] = ()) -> None:
    """Populate gradients of everything reachable from a scalar loss.

    Gradients of the touched subgraph are reset first, so calling
    backward twice on the same graph gives identical results instead of
    doubled ones. Tensors listed in ``leaves`` that the loss never
    reaches come out with explicit zero gradients.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericError("backward called on a non-finite loss")
    order = topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._grad_fn is not None and node.grad is not None:
            node._grad_fn(node.grad)
    for leaf in leaves:
        if leaf.requires_grad and leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
