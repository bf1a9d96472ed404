"""Per-category IoU and ranked average precision, weighted by voxel count.

Averages over categories weight each category by its ground-truth voxel
count, the empty category included. IoU accumulates integer
intersection/union counts across samples, so sample order can never
change a report. Average precision is computed per sample per category
and combined across samples weighted by that sample's positive count,
with exact summation (math.fsum), again order-independent.

A category with an empty union (IoU) or no positives (AP) carries NaN
and weight zero; every weighted average satisfies
sum(count_c * metric_c) / sum(count_c) over the non-NaN categories.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from .errors import ShapeError
from .scenes import SemanticVolume, default_names

Array = np.ndarray


def argmax_labels(prob: Array, names: tuple[str, ...] = ()) -> SemanticVolume:
    """Collapse per-category probabilities to labels; ties take the
    lowest category index."""
    prob = np.asarray(prob)
    if prob.ndim != 4:
        raise ShapeError(f"probability volume must be 4-d, got shape {prob.shape}")
    nc = prob.shape[-1]
    labels = np.argmax(prob, axis=-1).astype(np.uint8)
    return SemanticVolume(labels, nc, names or default_names(nc))


def _check_pair(extents_a, extents_b, what: str) -> None:
    if extents_a != extents_b:
        raise ShapeError(f"{what}: {extents_a} vs {extents_b}")


def iou_counts(pred: SemanticVolume, gt: SemanticVolume) -> tuple[Array, Array, Array]:
    """Integer (intersection, union, gt count) per category."""
    _check_pair(pred.extents, gt.extents, "label grids differ in shape")
    if pred.num_categories != gt.num_categories:
        raise ShapeError(
            f"category counts differ: {pred.num_categories} vs {gt.num_categories}"
        )
    nc = gt.num_categories
    inter = np.zeros(nc, dtype=np.int64)
    union = np.zeros(nc, dtype=np.int64)
    counts = np.zeros(nc, dtype=np.int64)
    for c in range(nc):
        p = pred.labels == c
        g = gt.labels == c
        inter[c] = np.count_nonzero(p & g)
        union[c] = np.count_nonzero(p | g)
        counts[c] = np.count_nonzero(g)
    return inter, union, counts


def _ratio_or_nan(num: Array, den: Array) -> Array:
    out = np.full(len(num), math.nan)
    mask = den > 0
    out[mask] = num[mask] / den[mask]
    return out


def weighted_mean(metrics, counts) -> float:
    """sum(count * metric) / sum(count) over the non-NaN categories."""
    num = []
    den = []
    for metric, count in zip(metrics, counts):
        if not math.isnan(metric):
            num.append(float(count) * metric)
            den.append(float(count))
    total = math.fsum(den)
    return math.fsum(num) / total if total > 0 else math.nan


def iou(pred: SemanticVolume, gt: SemanticVolume) -> tuple[Array, float]:
    """Per-category IoU (NaN where the union is empty) and its
    count-weighted average."""
    inter, union, counts = iou_counts(pred, gt)
    per_category = _ratio_or_nan(inter.astype(np.float64), union)
    return per_category, weighted_mean(per_category, counts)


def average_precision(scores: Array, positives: Array) -> float:
    """Mean precision at each positive, ranked by descending score with
    ties kept in scan order. NaN when nothing is positive."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    positives = np.asarray(positives, dtype=bool).reshape(-1)
    if scores.shape != positives.shape:
        raise ShapeError(f"score/positive shapes differ: {scores.shape} vs {positives.shape}")
    if not positives.any():
        return math.nan
    order = np.argsort(-scores, kind="stable")
    ranked = positives[order]
    hits = np.cumsum(ranked)
    ranks = np.nonzero(ranked)[0]
    precisions = hits[ranks] / (ranks + 1.0)
    return math.fsum(precisions.tolist()) / len(precisions)


def mean_ap(prob: Array, gt: SemanticVolume) -> tuple[Array, float]:
    """Per-category average precision and its count-weighted mean."""
    prob = np.asarray(prob)
    _check_pair(prob.shape[:-1], gt.extents, "probability grid does not match labels")
    if prob.shape[-1] != gt.num_categories:
        raise ShapeError(
            f"probability grid has {prob.shape[-1]} channels, labels have "
            f"{gt.num_categories} categories"
        )
    nc = gt.num_categories
    per_category = np.full(nc, math.nan)
    counts = np.zeros(nc, dtype=np.int64)
    for c in range(nc):
        positives = (gt.labels == c).reshape(-1)
        counts[c] = int(positives.sum())
        per_category[c] = average_precision(prob[..., c].reshape(-1), positives)
    return per_category, weighted_mean(per_category, counts)


@dataclasses.dataclass(frozen=True)
class EvalReport:
    """Per-category metrics plus their voxel-count-weighted averages."""

    category_names: tuple[str, ...]
    iou: tuple[float, ...]
    average_precision: tuple[float, ...]
    voxel_counts: tuple[int, ...]
    mean_iou: float
    mean_average_precision: float
    sample_count: int
    config_fingerprint: str = ""

    def describe(self) -> str:
        width = max(len(n) for n in self.category_names)
        lines = [f"{'category':<{width}}  {'voxels':>10}  {'iou':>8}  {'ap':>8}"]
        for name, count, i, a in zip(
            self.category_names, self.voxel_counts, self.iou, self.average_precision
        ):
            lines.append(f"{name:<{width}}  {count:>10d}  {i:>8.4f}  {a:>8.4f}")
        lines.append(
            f"weighted mean over {self.sample_count} samples: "
            f"iou {self.mean_iou:.4f}, ap {self.mean_average_precision:.4f}"
        )
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        blob = json.loads(text)
        return cls(
            category_names=tuple(blob["category_names"]),
            iou=tuple(blob["iou"]),
            average_precision=tuple(blob["average_precision"]),
            voxel_counts=tuple(blob["voxel_counts"]),
            mean_iou=blob["mean_iou"],
            mean_average_precision=blob["mean_average_precision"],
            sample_count=blob["sample_count"],
            config_fingerprint=blob.get("config_fingerprint", ""),
        )


def evaluate(pairs, num_categories: int, names: tuple[str, ...] = (),
             fingerprint: str = "") -> EvalReport:
    """Score (probability grid, ground truth) pairs into one report."""
    names = names or default_names(num_categories)
    inter = np.zeros(num_categories, dtype=np.int64)
    union = np.zeros(num_categories, dtype=np.int64)
    counts = np.zeros(num_categories, dtype=np.int64)
    ap_terms: list[list[float]] = [[] for _ in range(num_categories)]
    ap_weights: list[list[float]] = [[] for _ in range(num_categories)]
    samples = 0
    for prob, gt in pairs:
        samples += 1
        prob = np.asarray(prob)
        pred = argmax_labels(prob, gt.names)
        i, u, n = iou_counts(pred, gt)
        inter += i
        union += u
        counts += n
        per_ap, _ = mean_ap(prob, gt)
        for c in range(num_categories):
            if not math.isnan(per_ap[c]):
                ap_terms[c].append(float(n[c]) * per_ap[c])
                ap_weights[c].append(float(n[c]))
    iou_per = _ratio_or_nan(inter.astype(np.float64), union)
    ap_per = np.full(num_categories, math.nan)
    for c in range(num_categories):
        total = math.fsum(ap_weights[c])
        if total > 0:
            ap_per[c] = math.fsum(ap_terms[c]) / total
    return EvalReport(
        category_names=tuple(names),
        iou=tuple(float(v) for v in iou_per),
        average_precision=tuple(float(v) for v in ap_per),
        voxel_counts=tuple(int(v) for v in counts),
        mean_iou=weighted_mean(iou_per, counts),
        mean_average_precision=weighted_mean(ap_per, counts),
        sample_count=samples,
        config_fingerprint=fingerprint,
    )


def mean_report(reports) -> EvalReport:
    """Average fold reports category by category.

    Per-category metrics are the plain mean over the folds where the
    category was scored; counts add up; the weighted averages are then
    recomputed from those pooled values so the weighted-average identity
    keeps holding on the combined report.
    """
    reports = list(reports)
    if not reports:
        raise ShapeError("cannot average zero reports")
    names = reports[0].category_names
    for r in reports[1:]:
        if r.category_names != names:
            raise ShapeError("reports use different category tables")
    nc = len(names)
    iou_per = np.full(nc, math.nan)
    ap_per = np.full(nc, math.nan)
    counts = np.zeros(nc, dtype=np.int64)
    for c in range(nc):
        ious = [r.iou[c] for r in reports if not math.isnan(r.iou[c])]
        aps = [r.average_precision[c] for r in reports if not math.isnan(r.average_precision[c])]
        if ious:
            iou_per[c] = math.fsum(ious) / len(ious)
        if aps:
            ap_per[c] = math.fsum(aps) / len(aps)
        counts[c] = sum(r.voxel_counts[c] for r in reports)
    return EvalReport(
        category_names=names,
        iou=tuple(float(v) for v in iou_per),
        average_precision=tuple(float(v) for v in ap_per),
        voxel_counts=tuple(int(v) for v in counts),
        mean_iou=weighted_mean(iou_per, counts),
        mean_average_precision=weighted_mean(ap_per, counts),
        sample_count=sum(r.sample_count for r in reports),
        config_fingerprint=reports[0].config_fingerprint,
    )
