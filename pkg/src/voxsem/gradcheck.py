"""Finite-difference verification of recorded gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericError
from .tensor import Tensor, backward


def grad_check(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest relative error between recorded and central-difference gradients.

    ``fn`` must rebuild a scalar loss from the tensors' current data on
    every call; the data is perturbed in place one coordinate at a time.
    The error at a coordinate is |a - n| / max(|a|, |n|, 1e-8). When
    ``max_coords`` is set, that many coordinates per tensor are sampled
    without replacement using ``rng``.
    """
    tensors = list(tensors)
    for t in tensors:
        if t.data.dtype != np.float64:
            raise NumericError("grad_check requires float64 tensors")
        if not t.requires_grad:
            raise ValueError("grad_check got a tensor that does not require gradients")
    if max_coords is not None and rng is None:
        rng = np.random.default_rng(0)

    loss = fn()
    backward(loss, leaves=tensors)
    recorded = [t.grad.copy() for t in tensors]

    worst = 0.0
    for t, grad in zip(tensors, recorded):
        flat_grad = grad.reshape(-1)
        n = t.data.size
        if max_coords is not None and n > max_coords:
            coords = np.sort(rng.choice(n, size=max_coords, replace=False))
        else:
            coords = range(n)
        for i in coords:
            original = t.data.flat[i]
            t.data.flat[i] = original + eps
            f_plus = float(fn().data.reshape(()))
            t.data.flat[i] = original - eps
            f_minus = float(fn().data.reshape(()))
            t.data.flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = float(flat_grad[i])
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
