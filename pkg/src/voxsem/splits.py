"""Seeded k-fold index splits."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def kfold_split(n: int, k: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Partition range(n) into k shuffled folds of near-equal size.

    Returns (train_indices, test_indices) per fold, both sorted. Fold
    sizes differ by at most one and every index lands in exactly one
    test fold.
    """
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    if n < k:
        raise ConfigError(f"cannot split {n} samples into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i in range(k):
        test = np.sort(folds[i])
        rest = [folds[j] for j in range(k) if j != i]
        train = np.sort(np.concatenate(rest)) if rest else np.array([], dtype=np.int64)
        out.append((train, test))
    return out
