"""Binary-classification evaluation: thresholded confusion metrics,
ROC sweep, and the Mann-Whitney form of the AUC (ties count 1/2)."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class MetricSet:
    """Threshold metrics plus AUC; undefined ratios are NaN markers."""

    auc: float
    accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    tp: int
    fp: int
    tn: int
    fn: int

    def value(self, name: str) -> float:
        return getattr(self, name)


METRIC_NAMES = ("auc", "accuracy", "sensitivity", "specificity", "precision")


@dataclass(frozen=True)
class RocCurve:
    """(false-positive rate, true-positive rate) points from (0,0) to (1,1)."""

    points: np.ndarray

    def __post_init__(self):
        pts = self.points
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("curve points must be an (m, 2) array")
        if np.any(np.diff(pts[:, 0]) < 0) or np.any(np.diff(pts[:, 1]) < 0):
            raise ValueError("ROC coordinates must be non-decreasing")
        pts.flags.writeable = False


def _check_scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and of equal length")
    return scores, labels.astype(np.int64)


def confusion_metrics(scores, labels, threshold: float = 0.5) -> MetricSet:
    """Counts and ratios predicting 1 when score >= threshold (auc is NaN)."""
    scores, labels = _check_scores_labels(scores, labels)
    if scores.size == 0:
        raise ValueError("need at least one observation")
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    n = tp + fp + tn + fn

    def ratio(num, den):
        return num / den if den > 0 else math.nan

    return MetricSet(
        auc=math.nan,
        accuracy=ratio(tp + tn, n),
        sensitivity=ratio(tp, tp + fn),
        specificity=ratio(tn, tn + fp),
        precision=ratio(tp, tp + fp),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative (ties 1/2)."""
    scores, labels = _check_scores_labels(scores, labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        return math.nan
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # midranks over tie groups
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_curve(scores, labels) -> RocCurve:
    """Threshold sweep over distinct score values, descending."""
    scores, labels = _check_scores_labels(scores, labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC curve needs both classes present")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_pos = (labels[order] == 1).astype(np.int64)
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(1 - sorted_pos)
    distinct = np.append(sorted_scores[1:] != sorted_scores[:-1], True)
    tpr = tp[distinct] / n_pos
    fpr = fp[distinct] / n_neg
    pts = np.vstack([
        np.concatenate([[0.0], fpr]),
        np.concatenate([[0.0], tpr]),
    ]).T
    if pts[-1, 0] != 1.0 or pts[-1, 1] != 1.0:
        pts = np.vstack([pts, [1.0, 1.0]])
    return RocCurve(pts)


def trapezoid_area(curve: RocCurve) -> float:
    pts = curve.points
    return float(np.trapezoid(pts[:, 1], pts[:, 0]))


def evaluate(scores, labels, threshold: float = 0.5) -> MetricSet:
    """Confusion metrics at the threshold plus the AUC."""
    base = confusion_metrics(scores, labels, threshold)
    return replace(base, auc=auc(scores, labels))


DEFAULT_FPR_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)


def tpr_at_grid(curve: RocCurve, grid=DEFAULT_FPR_GRID) -> np.ndarray:
    """TPR attained at each grid FPR (step interpolation, max at ties)."""
    pts = curve.points
    best_tpr = np.maximum.accumulate(pts[:, 1])
    idx = np.searchsorted(pts[:, 0], np.asarray(grid), side="right") - 1
    return best_tpr[np.maximum(idx, 0)]


def mean_roc(curves, grid=DEFAULT_FPR_GRID) -> np.ndarray:
    """Vertical average of ROC curves at a fixed FPR grid -> (m, 2) points."""
    grid = np.asarray(grid, dtype=np.float64)
    stack = np.vstack([tpr_at_grid(c, grid) for c in curves])
    return np.vstack([grid, stack.mean(axis=0)]).T
