"""Preprocessing: depth resizing, volume downsampling, label remapping."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .scenes import DepthImage, SemanticVolume, default_names

Array = np.ndarray


def one_hot(labels: Array, num_categories: int, dtype=np.float64) -> Array:
    """(..., ) labels -> (..., num_categories) one-hot planes."""
    labels = np.asarray(labels)
    if labels.size and int(labels.max()) >= num_categories:
        raise ShapeError(
            f"label {int(labels.max())} out of range for {num_categories} categories"
        )
    return np.eye(num_categories, dtype=dtype)[labels]


def resize_depth(image: DepthImage, shape: tuple[int, int]) -> DepthImage:
    """Bilinear downsample that respects the validity mask.

    Weights of invalid support pixels are dropped and the remainder
    renormalized; a target pixel is invalid only when all four supports
    are. Constant regions therefore stay constant no matter the mask.
    """
    sx, sy = image.shape
    tx, ty = int(shape[0]), int(shape[1])
    if tx < 1 or ty < 1:
        raise ShapeError(f"target shape must be positive, got {shape}")
    if tx > sx or ty > sy:
        raise ShapeError(f"can only shrink: {image.shape} -> {shape}")

    def axis_supports(src: int, dst: int):
        centers = (np.arange(dst) + 0.5) * (src / dst) - 0.5
        base = np.floor(centers)
        frac = centers - base
        i0 = np.clip(base, 0, src - 1).astype(np.int64)
        i1 = np.clip(base + 1, 0, src - 1).astype(np.int64)
        return i0, i1, frac

    x0, x1, fx = axis_supports(sx, tx)
    y0, y1, fy = axis_supports(sy, ty)
    values = image.filled(0.0).astype(np.float64)
    valid = image.valid.astype(np.float64)

    acc = np.zeros((tx, ty))
    wacc = np.zeros((tx, ty))
    for xi, wx in ((x0, 1.0 - fx), (x1, fx)):
        for yi, wy in ((y0, 1.0 - fy), (y1, fy)):
            w = np.outer(wx, wy) * valid[np.ix_(xi, yi)]
            acc += w * values[np.ix_(xi, yi)]
            wacc += w
    with np.errstate(invalid="ignore"):
        out = np.where(wacc > 0, acc / np.where(wacc > 0, wacc, 1.0), np.nan)
    return DepthImage(out.astype(np.float32))


def downsample_volume(volume: SemanticVolume, factor: int = 3) -> SemanticVolume:
    """Majority-vote block shrink.

    Each factor^3 block takes its most frequent non-empty category with
    ties going to the lower index; a block is empty only when every cell
    in it is. Extents that do not divide evenly are padded with empty.
    """
    if factor < 1:
        raise ShapeError(f"factor must be positive, got {factor}")
    labels = volume.labels
    pads = [(0, (-e) % factor) for e in labels.shape]
    padded = np.pad(labels, pads, constant_values=0)
    ex, ey, ez = (e // factor for e in padded.shape)
    blocks = (
        padded.reshape(ex, factor, ey, factor, ez, factor)
        .transpose(0, 2, 4, 1, 3, 5)
        .reshape(ex, ey, ez, factor**3)
    )
    counts = np.zeros((ex, ey, ez, volume.num_categories), dtype=np.int32)
    for c in range(volume.num_categories):
        counts[..., c] = (blocks == c).sum(axis=-1)
    occupied_counts = counts[..., 1:]
    best = occupied_counts.argmax(axis=-1).astype(np.uint8) + 1
    any_occupied = occupied_counts.sum(axis=-1) > 0
    out = np.where(any_occupied, best, 0).astype(np.uint8)
    return SemanticVolume(out, volume.num_categories, volume.names)


def remap_labels(
    volume: SemanticVolume, mapping, target_names: tuple[str, ...] | int
) -> SemanticVolume:
    """Merge categories through a lookup table.

    ``mapping`` has one entry per source category giving its target
    index; the result uses ``target_names`` (or that many generated
    names) as its category table.
    """
    table = np.asarray(mapping)
    if table.shape != (volume.num_categories,):
        raise ShapeError(
            f"mapping must list all {volume.num_categories} source categories, "
            f"got shape {table.shape}"
        )
    if isinstance(target_names, int):
        names = default_names(target_names)
    else:
        names = tuple(target_names)
    if table.min() < 0 or int(table.max()) >= len(names):
        raise ShapeError(
            f"mapping targets must lie in [0, {len(names)}), got "
            f"[{int(table.min())}, {int(table.max())}]"
        )
    new_labels = table.astype(np.uint8)[volume.labels]
    return SemanticVolume(new_labels, len(names), names)
