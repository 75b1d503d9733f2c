"""Mean-decrease-impurity feature importance and cross-fold aggregation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ensembles import TrainedModel


class ZeroLedgerWarning(UserWarning):
    """A model executed no splits; importances fall back to uniform."""


@dataclass(frozen=True)
class ImportanceReport:
    """Normalized importances (sum 1) with a descending rank permutation."""

    model: str
    features: tuple[str, ...]
    values: np.ndarray
    ranks: np.ndarray

    def top(self, k: int) -> set[str]:
        order = np.argsort(self.ranks)
        return {self.features[i] for i in order[:k]}

    def bottom(self, k: int) -> set[str]:
        order = np.argsort(self.ranks)
        return {self.features[i] for i in order[-k:]}


def _ranked(model: str, features: tuple[str, ...], values: np.ndarray) -> ImportanceReport:
    # rank 1 = most important; ties broken by feature name
    order = sorted(range(len(features)), key=lambda i: (-values[i], features[i]))
    ranks = np.empty(len(features), dtype=np.int64)
    for rank, i in enumerate(order, start=1):
        ranks[i] = rank
    values = values.copy()
    values.flags.writeable = False
    ranks.flags.writeable = False
    return ImportanceReport(model, features, values, ranks)


def model_importance(model: TrainedModel) -> ImportanceReport:
    """Normalize a tree model's impurity ledger to sum 1.

    AdaBoost ledgers are already coefficient-weighted at fit time; the
    logistic baseline has no impurity ledger and is rejected.
    """
    if model.ledger is None:
        raise ValueError(f"{model.algorithm}: no impurity ledger (not a tree model)")
    total = float(np.sum(model.ledger))
    if total <= 0.0:
        warnings.warn(
            "model executed no splits; reporting uniform importances",
            ZeroLedgerWarning,
            stacklevel=2,
        )
        values = np.full(len(model.columns), 1.0 / len(model.columns))
    else:
        values = model.ledger / total
    return _ranked(model.algorithm, tuple(model.columns), values)


def aggregate_importance(reports) -> ImportanceReport:
    """Element-wise mean of same-feature reports, renormalized and reranked."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    features = reports[0].features
    model = reports[0].model
    for r in reports[1:]:
        if r.features != features:
            raise ValueError(
                f"mismatched feature sets: {features} vs {r.features}"
            )
    mean = np.mean([r.values for r in reports], axis=0)
    total = float(np.sum(mean))
    if total > 0:
        mean = mean / total
    return _ranked(model, features, mean)
