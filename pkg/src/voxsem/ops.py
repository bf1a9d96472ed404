"""Differentiable layer operators for the network stacks.

Convolutions run as strided sliding-window views contracted with the
kernel via ``tensordot``. Input gradients are scattered tap by tap
(9 taps for a 3x3 kernel, 27 for 3x3x3), which fixes the arithmetic
order and keeps repeated runs bitwise identical. The transposed 3D
convolution reuses the input-gradient routine of the matching strided
convolution verbatim, so the two operators stay exact adjoints of each
other by construction rather than by approximation.

All operators take single samples: images are (H, W, C), volumes are
(D, H, W, C). Batching happens one level up, in the training loop.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Array, Tensor, _coerce, _make, accumulate_grad, reshape

__all__ = [
    "conv2d",
    "conv3d",
    "deconv3d",
    "maxpool2d",
    "dense",
    "leaky_relu",
    "relu",
    "sigmoid",
    "reshape",
    "flatten",
    "channel_slice",
]


def _tuple_of(value, n: int, name: str) -> tuple[int, ...]:
    if isinstance(value, int):
        value = (value,) * n
    value = tuple(int(v) for v in value)
    if len(value) != n or any(v < 1 for v in value):
        raise ShapeError(f"{name} must be {n} positive ints, got {value!r}")
    return value


def _plan_padding(extent: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Per-axis (pad_before, pad_after, out_extent)."""
    if padding == "same":
        out = -(-extent // stride)
        total = max((out - 1) * stride + k - extent, 0)
        return total // 2, total - total // 2, out
    if padding == "valid":
        if k > extent:
            raise ShapeError(f"kernel extent {k} exceeds input extent {extent} with valid padding")
        return 0, 0, (extent - k) // stride + 1
    raise ShapeError(f"padding must be 'same' or 'valid', got {padding!r}")


def _windows(padded: Array, kshape: tuple[int, ...], strides: tuple[int, ...]) -> Array:
    """Strided view (*out_spatial, Cin, *kshape) over a padded array."""
    nd = len(kshape)
    view = np.lib.stride_tricks.sliding_window_view(padded, kshape, axis=tuple(range(nd)))
    return view[tuple(slice(None, None, s) for s in strides)]


def _contract(windows: Array, kernel: Array) -> Array:
    """Forward contraction: (*out, Cin, *k) x (*k, Cin, Cout) -> (*out, Cout)."""
    nd = kernel.ndim - 2
    win_axes = list(range(windows.ndim - nd - 1, windows.ndim))
    ker_axes = [nd] + list(range(nd))
    return np.tensordot(windows, kernel, axes=(win_axes, ker_axes))


def _kernel_grad(windows: Array, g: Array) -> Array:
    """(*out, Cin, *k) x (*out, Cout) -> (*k, Cin, Cout)."""
    nd = g.ndim - 1
    dk = np.tensordot(windows, g, axes=(list(range(nd)), list(range(nd))))
    return np.moveaxis(dk, 0, nd)


def _scatter_input_grad(
    g: Array, kernel: Array, padded_spatial: tuple[int, ...], strides: tuple[int, ...]
) -> Array:
    """Route an output gradient back through a strided correlation.

    For each kernel tap the whole output grid lands on a strided slice
    of the padded input, so the scatter is one vectorized add per tap.
    """
    nd = kernel.ndim - 2
    cin = kernel.shape[nd]
    out_spatial = g.shape[:nd]
    dxp = np.zeros(padded_spatial + (cin,), dtype=g.dtype)
    for tap in np.ndindex(*kernel.shape[:nd]):
        sl = tuple(
            slice(t, t + s * o, s) for t, s, o in zip(tap, strides, out_spatial)
        )
        dxp[sl] += np.tensordot(g, kernel[tap], axes=([nd], [1]))
    return dxp


def _conv_nd(x: Tensor, kernel: Tensor, strides: tuple[int, ...], padding: str, nd: int) -> Tensor:
    if x.data.ndim != nd + 1:
        raise ShapeError(f"conv{nd}d input must have {nd + 1} axes, got shape {x.shape}")
    if kernel.data.ndim != nd + 2:
        raise ShapeError(f"conv{nd}d kernel must have {nd + 2} axes, got shape {kernel.shape}")
    cin = x.shape[-1]
    if kernel.shape[nd] != cin:
        raise ShapeError(
            f"input has {cin} channels but kernel {kernel.shape} expects {kernel.shape[nd]}"
        )
    kshape = kernel.shape[:nd]
    plans = [
        _plan_padding(x.shape[i], kshape[i], strides[i], padding) for i in range(nd)
    ]
    pad = tuple((lo, hi) for lo, hi, _ in plans) + ((0, 0),)
    xp = np.pad(x.data, pad)
    win = _windows(xp, kshape, strides)
    out_data = _contract(win, kernel.data)
    in_spatial = x.shape[:nd]
    padded_spatial = xp.shape[:nd]

    def grad_fn(g: Array) -> None:
        accumulate_grad(kernel, _kernel_grad(win, g))
        if x.requires_grad:
            dxp = _scatter_input_grad(g, kernel.data, padded_spatial, strides)
            crop = tuple(slice(lo, lo + n) for (lo, _, _), n in zip(plans, in_spatial))
            accumulate_grad(x, dxp[crop])

    return _make(out_data, (x, kernel), grad_fn)


def conv2d(x: Tensor, kernel: Tensor, stride=(1, 1), padding: str = "same") -> Tensor:
    """Cross-correlate an (H, W, Cin) image with a (kh, kw, Cin, Cout) kernel."""
    return _conv_nd(_coerce(x), _coerce(kernel), _tuple_of(stride, 2, "stride"), padding, 2)


def conv3d(x: Tensor, kernel: Tensor, stride=(2, 2, 2), padding: str = "same") -> Tensor:
    """Cross-correlate a (D, H, W, Cin) volume with a (kd, kh, kw, Cin, Cout) kernel."""
    return _conv_nd(_coerce(x), _coerce(kernel), _tuple_of(stride, 3, "stride"), padding, 3)


def deconv3d(x: Tensor, kernel: Tensor, stride=(2, 2, 2)) -> Tensor:
    """Transposed 3D convolution scaling each spatial axis by its stride.

    ``kernel`` has layout (kd, kh, kw, Cout, Cin). Forward is exactly the
    input-gradient of the strided ``conv3d`` that maps the output extents
    back to the input extents with the same kernel array, down to the
    order of additions.
    """
    x, kernel = _coerce(x), _coerce(kernel)
    strides = _tuple_of(stride, 3, "stride")
    if x.data.ndim != 4:
        raise ShapeError(f"deconv3d input must have 4 axes, got shape {x.shape}")
    if kernel.data.ndim != 5:
        raise ShapeError(f"deconv3d kernel must have 5 axes, got shape {kernel.shape}")
    if kernel.shape[4] != x.shape[3]:
        raise ShapeError(
            f"input has {x.shape[3]} channels but kernel {kernel.shape} expects {kernel.shape[4]}"
        )
    kshape = kernel.shape[:3]
    in_spatial = x.shape[:3]
    out_spatial = tuple(n * s for n, s in zip(in_spatial, strides))
    plans = [
        _plan_padding(out_spatial[i], kshape[i], strides[i], "same") for i in range(3)
    ]
    padded_spatial = tuple(n + lo + hi for n, (lo, hi, _) in zip(out_spatial, plans))
    yp = _scatter_input_grad(x.data, kernel.data, padded_spatial, strides)
    crop = tuple(slice(lo, lo + n) for (lo, _, _), n in zip(plans, out_spatial))
    out_data = yp[crop]

    def grad_fn(g: Array) -> None:
        pad = tuple((lo, hi) for lo, hi, _ in plans) + ((0, 0),)
        gp = np.pad(g, pad)
        win = _windows(gp, kshape, strides)
        if x.requires_grad:
            accumulate_grad(x, _contract(win, kernel.data))
        # same contraction as a conv kernel gradient, with the roles of
        # the two activations swapped
        dk = np.tensordot(win, x.data, axes=([0, 1, 2], [0, 1, 2]))
        accumulate_grad(kernel, np.moveaxis(dk, 0, 3))

    return _make(out_data, (x, kernel), grad_fn)


def maxpool2d(x: Tensor, size=(2, 2), stride=(2, 2)) -> Tensor:
    """Non-overlapping max pool; odd trailing rows/columns are dropped.

    Ties inside a window resolve to the first maximum in row-major scan
    order, and the gradient routes to that single element.
    """
    x = _coerce(x)
    size = _tuple_of(size, 2, "size")
    stride = _tuple_of(stride, 2, "stride")
    if size != stride:
        raise ShapeError(f"only non-overlapping pooling is supported (size {size} != stride {stride})")
    if x.data.ndim != 3:
        raise ShapeError(f"maxpool2d input must have 3 axes, got shape {x.shape}")
    ph, pw = size
    h, w, c = x.shape
    if h < ph or w < pw:
        raise ShapeError(f"input {h}x{w} is smaller than the {ph}x{pw} pooling window")
    h2, w2 = h // ph, w // pw
    cropped = x.data[: h2 * ph, : w2 * pw]
    win = cropped.reshape(h2, ph, w2, pw, c).transpose(0, 2, 1, 3, 4).reshape(h2, w2, ph * pw, c)
    idx = win.argmax(axis=2)
    out_data = np.take_along_axis(win, idx[:, :, None, :], axis=2)[:, :, 0, :]

    def grad_fn(g: Array) -> None:
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, idx[:, :, None, :], g[:, :, None, :], axis=2)
        dcrop = dwin.reshape(h2, w2, ph, pw, c).transpose(0, 2, 1, 3, 4).reshape(h2 * ph, w2 * pw, c)
        if (h2 * ph, w2 * pw) == (h, w):
            accumulate_grad(x, dcrop)
        else:
            dx = np.zeros_like(x.data)
            dx[: h2 * ph, : w2 * pw] = dcrop
            accumulate_grad(x, dx)

    return _make(out_data, (x,), grad_fn)


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ W + b`` for a flat (n,) input."""
    x, weights, bias = _coerce(x), _coerce(weights), _coerce(bias)
    if x.data.ndim != 1:
        raise ShapeError(f"dense input must be flat, got shape {x.shape}")
    if weights.data.ndim != 2 or weights.shape[0] != x.shape[0]:
        raise ShapeError(f"weights {weights.shape} do not match input {x.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"bias {bias.shape} does not match weights {weights.shape}")

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, weights.data @ g)
        accumulate_grad(weights, np.outer(x.data, g))
        accumulate_grad(bias, g)

    return _make(x.data @ weights.data + bias.data, (x, weights, bias), grad_fn)


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    """x for x >= 0, alpha*x below; the kink at 0 takes the slope-1 side."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"leaky slope must lie in (0, 1), got {alpha}")
    x = _coerce(x)
    pos = x.data >= 0

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, g * np.where(pos, 1.0, alpha))

    return _make(np.where(pos, x.data, alpha * x.data), (x,), grad_fn)


def relu(x: Tensor) -> Tensor:
    x = _coerce(x)
    pos = x.data >= 0

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, g * pos)

    return _make(np.where(pos, x.data, 0.0), (x,), grad_fn)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, computed on the non-overflowing branch."""
    x = _coerce(x)
    out_data = np.empty_like(x.data)
    pos = x.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    expx = np.exp(x.data[~pos])
    out_data[~pos] = expx / (1.0 + expx)

    def grad_fn(g: Array) -> None:
        accumulate_grad(x, g * out_data * (1.0 - out_data))

    return _make(out_data, (x,), grad_fn)


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (int(np.prod(x.shape, dtype=np.int64)),))


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice the trailing channel axis; the gradient zero-fills the rest."""
    x = _coerce(x)
    c = x.shape[-1]
    if not 0 <= start < stop <= c:
        raise ShapeError(f"channel slice [{start}:{stop}] out of range for {c} channels")

    def grad_fn(g: Array) -> None:
        dx = np.zeros_like(x.data)
        dx[..., start:stop] = g
        accumulate_grad(x, dx)

    return _make(x.data[..., start:stop].copy(), (x,), grad_fn)
