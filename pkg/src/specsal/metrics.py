"""Saliency evaluation metrics with a fixed, documented threshold protocol.

All functions take a predicted map with values in [0, 1] and a binary ground
truth of the same shape. Degenerate inputs raise MetricInputError instead of
returning a conventional value; `evaluate_pair` converts those per-metric
errors into flagged absences so one bad metric cannot sink a whole run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import MetricInputError, ShapeError

THRESHOLD_PROTOCOL = "adaptive 2*mean(pred) capped at 1; avg_f1 over i/256, i=1..255"

F1_THRESHOLDS = np.arange(1, 256) / 256.0


def _validated(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    if pred.size == 0:
        raise MetricInputError("empty maps have no metrics")
    if not np.isfinite(pred).all():
        raise MetricInputError("prediction contains non-finite values")
    if pred.min() < 0.0 or pred.max() > 1.0:
        raise MetricInputError(
            f"prediction values outside [0,1]: min {pred.min()}, max {pred.max()}"
        )
    if not np.isin(gt, (0.0, 1.0)).all():
        raise MetricInputError("ground truth must be binary")
    return pred.ravel(), gt.ravel()


def mae(pred, gt) -> float:
    pred, gt = _validated(pred, gt)
    return float(np.abs(pred - gt).mean())


def adaptive_threshold(pred) -> float:
    """The reported operating point: twice the mean saliency, capped at 1."""
    return min(1.0, 2.0 * float(np.asarray(pred, dtype=np.float64).mean()))


def precision_recall(pred, gt, threshold: float | None = None):
    """(precision, recall) after binarizing at ``threshold``.

    ``None`` selects the adaptive threshold. Pixels scoring >= threshold count
    as predicted foreground. Precision of an empty prediction is defined as 1.
    """
    pred, gt = _validated(pred, gt)
    positives = gt.sum()
    if positives == 0:
        raise MetricInputError("ground truth has no foreground pixels")
    if threshold is None:
        threshold = adaptive_threshold(pred)
    if not 0.0 <= threshold <= 1.0:
        raise MetricInputError(f"threshold {threshold} outside [0,1]")
    chosen = pred >= threshold
    true_positives = float(gt[chosen].sum())
    predicted = int(chosen.sum())
    precision = true_positives / predicted if predicted else 1.0
    recall = true_positives / float(positives)
    return precision, recall


def average_f1(pred, gt) -> float:
    """Mean F1 over the 255-point uniform threshold grid."""
    pred, gt = _validated(pred, gt)
    positives = gt.sum()
    if positives == 0:
        raise MetricInputError("ground truth has no foreground pixels")
    order = np.argsort(pred, kind="stable")
    sorted_pred = pred[order]
    # positives among pixels strictly below each threshold, by prefix sums
    below_counts = np.searchsorted(sorted_pred, F1_THRESHOLDS, side="left")
    positives_below = np.concatenate(([0.0], np.cumsum(gt[order])))[below_counts]
    true_positives = positives - positives_below
    predicted = pred.size - below_counts
    precision = np.where(predicted > 0, true_positives / np.maximum(predicted, 1), 1.0)
    recall = true_positives / positives
    denominator = precision + recall
    f1 = np.where(
        denominator > 0, 2.0 * precision * recall / np.where(denominator > 0, denominator, 1.0), 0.0
    )
    return float(f1.mean())


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_values = values[order]
    group_starts = np.concatenate(
        ([0], np.flatnonzero(np.diff(sorted_values)) + 1, [len(values)])
    )
    for start, end in zip(group_starts[:-1], group_starts[1:]):
        ranks[order[start:end]] = 0.5 * (start + 1 + end)
    return ranks


def roc_auc(pred, gt) -> float:
    """Exact ROC area via the rank-sum statistic with midrank ties."""
    pred, gt = _validated(pred, gt)
    positives = int(gt.sum())
    negatives = gt.size - positives
    if positives == 0 or negatives == 0:
        raise MetricInputError("ROC area needs both classes in the ground truth")
    rank_sum = float(_midranks(pred)[gt == 1.0].sum())
    return (rank_sum - positives * (positives + 1) / 2.0) / (positives * negatives)


def pearson_cc(pred, gt) -> float:
    """Pearson correlation of the flattened maps."""
    pred, gt = _validated(pred, gt)
    a = pred - pred.mean()
    b = gt - gt.mean()
    denominator = np.sqrt((a * a).sum() * (b * b).sum())
    if denominator == 0.0:
        raise MetricInputError("correlation of a constant map is undefined")
    return float((a * b).sum() / denominator)


@dataclass
class MetricReport:
    """One evaluation row; metrics whose preconditions failed hold None."""

    mae: float
    pre: float | None
    rec: float | None
    avg_f1: float | None
    auc: float | None
    cc: float | None
    threshold_protocol: str = THRESHOLD_PROTOCOL
    errors: tuple = ()

    COLUMNS = ("mae", "pre", "rec", "avg_f1", "auc", "cc")

    def to_dict(self) -> dict:
        doc = {name: getattr(self, name) for name in self.COLUMNS}
        doc["threshold_protocol"] = self.threshold_protocol
        if self.errors:
            doc["errors"] = list(self.errors)
        return doc


def evaluate_pair(pred, gt) -> MetricReport:
    """Score one prediction; degenerate metrics are flagged, not raised."""
    _validated(pred, gt)  # shared domain errors surface before any metric
    values = {}
    errors = []
    metric_functions = {
        "mae": mae,
        "pre": lambda p, g: precision_recall(p, g)[0],
        "rec": lambda p, g: precision_recall(p, g)[1],
        "avg_f1": average_f1,
        "auc": roc_auc,
        "cc": pearson_cc,
    }
    for name, metric in metric_functions.items():
        try:
            values[name] = metric(pred, gt)
        except MetricInputError as err:
            values[name] = None
            errors.append(f"{name}: {err}")
    return MetricReport(errors=tuple(errors), **values)


def mean_report(reports) -> MetricReport:
    """Columnwise mean over reports, skipping flagged (None) entries."""
    reports = list(reports)
    if not reports:
        raise MetricInputError("cannot average zero metric reports")
    values = {}
    errors = []
    for name in MetricReport.COLUMNS:
        defined = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        skipped = len(reports) - len(defined)
        if skipped:
            errors.append(f"{name}: skipped {skipped} of {len(reports)} images")
        values[name] = float(np.mean(defined)) if defined else None
    return MetricReport(errors=tuple(errors), **values)


def attribute_eval(scored_entries) -> dict:
    """Aggregate (attributes, MetricReport) pairs into per-attribute means.

    Returns {"all": ..., attribute: ...}; attributes never seen are absent
    from the result rather than reported as zero.
    """
    scored_entries = list(scored_entries)
    if not scored_entries:
        raise MetricInputError("cannot evaluate an empty entry list")
    by_attribute = {}
    for attributes, report in scored_entries:
        for attribute in attributes:
            by_attribute.setdefault(attribute, []).append(report)
    result = {"all": mean_report(report for _, report in scored_entries)}
    for attribute in sorted(by_attribute):
        result[attribute] = mean_report(by_attribute[attribute])
    return result
