"""Input canonicalization for the estimator API.

Accepts either the package's own types (DepthImage, SemanticVolume) or
raw numpy arrays, and returns lists of the package types with shapes
checked against an architecture.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .scenes import DepthImage, SemanticVolume


def as_depth_images(X, image_shape: tuple[int, int]) -> list[DepthImage]:
    """A stack (n, horizontal, vertical) or list of DepthImage."""
    if isinstance(X, np.ndarray):
        if X.ndim != 3:
            raise ShapeError(
                f"depth input must be (samples, {image_shape[0]}, {image_shape[1]}), "
                f"got shape {X.shape}"
            )
        items = [X[i] for i in range(X.shape[0])]
    else:
        items = list(X)
    if not items:
        raise ShapeError("need at least one depth image")
    out = []
    for i, item in enumerate(items):
        img = item if isinstance(item, DepthImage) else DepthImage(np.asarray(item, dtype=np.float32))
        if img.shape != tuple(image_shape):
            raise ShapeError(
                f"depth image {i} has shape {img.shape}, expected {tuple(image_shape)}"
            )
        out.append(img)
    return out


def as_volumes(y, volume_shape: tuple[int, int, int], num_categories: int) -> list[SemanticVolume]:
    """A stack (n, x, y, z) of labels or list of SemanticVolume."""
    if isinstance(y, np.ndarray):
        if y.ndim != 4:
            raise ShapeError(
                f"label input must be (samples, x, y, z), got shape {y.shape}"
            )
        items = [y[i] for i in range(y.shape[0])]
    else:
        items = list(y)
    if not items:
        raise ShapeError("need at least one label volume")
    out = []
    for i, item in enumerate(items):
        vol = item if isinstance(item, SemanticVolume) else SemanticVolume(
            np.asarray(item), num_categories
        )
        if vol.extents != tuple(volume_shape):
            raise ShapeError(
                f"volume {i} has extents {vol.extents}, expected {tuple(volume_shape)}"
            )
        if vol.num_categories != num_categories:
            raise ShapeError(
                f"volume {i} has {vol.num_categories} categories, expected {num_categories}"
            )
        out.append(vol)
    return out
