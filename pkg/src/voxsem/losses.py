"""Training objectives.

The voxel term is an asymmetric binary cross entropy: ``positive_weight``
scales the penalty for missing occupied voxels, its complement the
penalty for hallucinating them. Probabilities are clamped to
[PROB_FLOOR, 1 - PROB_FLOOR] before any logarithm, which bounds every
loss and keeps gradients finite at saturated outputs.
"""

from __future__ import annotations

import numpy as np

from .networks import GaussianLatent
from .tensor import Tensor, add, clamp, exp, log, mul, reduce_mean, reduce_sum

PROB_FLOOR = 1e-7


def _clamped(prob: Tensor) -> Tensor:
    return clamp(prob, PROB_FLOOR, 1.0 - PROB_FLOOR)


def per_voxel_error(prob: Tensor, target, positive_weight: float = 0.85) -> Tensor:
    """Elementwise weighted cross entropy between probabilities and {0,1} targets."""
    if not 0.0 < positive_weight < 1.0:
        raise ValueError(f"positive_weight must lie in (0, 1), got {positive_weight}")
    prob = prob if isinstance(prob, Tensor) else Tensor(prob)
    target = np.asarray(target, dtype=np.float64)
    q = _clamped(prob)
    pos = mul(log(q), target * -positive_weight)
    neg = mul(log(add(mul(q, -1.0), 1.0)), (1.0 - target) * (positive_weight - 1.0))
    return add(pos, neg)


def reconstruction_loss(
    prob: Tensor, target, positive_weight: float = 0.85, reduction: str = "sum"
) -> Tensor:
    """Voxel cross entropy reduced over all voxels and categories."""
    err = per_voxel_error(prob, target, positive_weight)
    if reduction == "sum":
        return reduce_sum(err)
    if reduction == "mean":
        return reduce_mean(err)
    raise ValueError(f"reduction must be 'sum' or 'mean', got {reduction!r}")


def adversarial_generator_loss(score: Tensor) -> Tensor:
    """-log(score): low when the discriminator is fooled."""
    return mul(log(_clamped(score)), -1.0)


def adversarial_discriminator_loss(real_score: Tensor, fake_score: Tensor) -> Tensor:
    """-log(real) - log(1 - fake): low when both sides are classified right."""
    real_term = mul(log(_clamped(real_score)), -1.0)
    fake_term = mul(log(add(mul(_clamped(fake_score), -1.0), 1.0)), -1.0)
    return add(real_term, fake_term)


def kl_divergence(latent: GaussianLatent) -> Tensor:
    """KL from a diagonal Gaussian to the standard normal, summed over
    every latent coordinate: 0.5 * sum(exp(lv) + mean^2 - 1 - lv)."""
    mean, lv = latent.mean, latent.log_variance
    inner = add(add(exp(lv), mul(mean, mean)), add(mul(lv, -1.0), -1.0))
    return mul(reduce_sum(inner), 0.5)


def vae_loss(
    prob: Tensor,
    target,
    latent: GaussianLatent,
    positive_weight: float = 0.85,
    kl_weight: float = 1.0,
    reduction: str = "sum",
) -> Tensor:
    """Reconstruction term plus weighted prior penalty."""
    recon = reconstruction_loss(prob, target, positive_weight, reduction)
    return add(recon, mul(kl_divergence(latent), kl_weight))
