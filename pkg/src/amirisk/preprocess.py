"""Fold-aware feature encoding: z-scoring fitted on training rows only.

Binary features already carry a {0,1} encoding from the parser, so the
two-category one-hot collapses to a single indicator column.  Numeric
features are standardized with statistics fitted on a training subset
(sample sd, n-1 denominator); applying a standardizer never recomputes
statistics, which is what keeps held-out folds leak-free.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datamodel import BINARY, CohortView, FeatureSchema


class ConstantFeatureWarning(UserWarning):
    """A numeric feature had zero variance on the training subset."""


@dataclass(frozen=True)
class Standardizer:
    """Per-numeric-feature location/scale fitted on a training subset."""

    names: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        self.means.flags.writeable = False
        self.sds.flags.writeable = False

    def transform_column(self, name: str, values: np.ndarray) -> np.ndarray:
        i = self.names.index(name)
        sd = self.sds[i]
        if sd == 0.0:
            warnings.warn(
                f"feature {name!r} is constant on its training subset; "
                "emitting a zero column",
                ConstantFeatureWarning,
                stacklevel=3,
            )
            return np.zeros_like(values)
        return (values - self.means[i]) / sd


@dataclass(frozen=True)
class DesignMatrix:
    """Encoded rows ready for model fitting.

    ``row_indices`` records which cohort rows produced the matrix, so
    leakage checks can trace exactly what reached fitting code.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray
    row_indices: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ValueError("values shape does not match columns")
        if self.values.shape[0] != self.labels.size:
            raise ValueError("labels length does not match values")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("design matrix contains non-finite entries")
        self.values.flags.writeable = False
        self.labels.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return int(self.labels.size)


def fit_standardizer(subset: CohortView) -> Standardizer:
    """Means and sample standard deviations of the numeric features."""
    if subset.n_rows == 0:
        raise ValueError("cannot fit a standardizer on an empty subset")
    schema = subset.table.schema
    names = schema.numeric_names
    X = subset.X
    means = np.empty(len(names))
    sds = np.empty(len(names))
    for i, name in enumerate(names):
        col = X[:, schema.index_of(name)]
        means[i] = np.mean(col)
        sds[i] = np.std(col, ddof=1) if col.size > 1 else 0.0
    return Standardizer(names, means, sds)


def encode(subset: CohortView, standardizer: Standardizer,
           mask: tuple[str, ...] = ()) -> DesignMatrix:
    """Encode a row view into a DesignMatrix under an ablation mask.

    Masked features are absent (not zeroed); surviving columns keep the
    schema order.
    """
    schema = subset.table.schema
    kept: FeatureSchema = schema.apply_mask(mask)
    X = subset.X
    out = np.empty((subset.n_rows, len(kept.names)), dtype=np.float64)
    for j, (name, kind) in enumerate(kept.entries):
        col = X[:, schema.index_of(name)]
        if kind == BINARY:
            out[:, j] = col
        else:
            out[:, j] = standardizer.transform_column(name, col)
    return DesignMatrix(
        columns=kept.names,
        values=out,
        labels=subset.y.astype(np.int8),
        row_indices=np.array(subset.indices, dtype=np.int64),
    )
