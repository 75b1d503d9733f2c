"""Binary-classification decision trees (CART style) with sample weights.

Trees grow greedily on weighted impurity decrease.  The packed array
representation (node lists with explicit child indices) keeps prediction
fast and serialization trivial.  Each fitted tree carries a per-feature
ledger of weight-scaled impurity decreases used for importance ranking.

Conventions documented as part of the model format:
  * routing uses ``value <= threshold`` for the left branch;
  * thresholds sit at midpoints between consecutive distinct values;
  * equal-gain ties resolve to the lowest feature index, then the lowest
    threshold, independent of the random seed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

CRITERIA = {"gini": _kernels.GINI, "entropy": _kernels.ENTROPY}


@dataclass(frozen=True)
class TreeParams:
    """Structural constraints for a single tree."""

    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str = "all"  # "all" or "sqrt" ("auto" is accepted as "sqrt")
    criterion: str = "gini"
    max_leaf_nodes: int | None = None
    leaf_smoothing: float = 0.0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive or None")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_leaf > self.min_samples_split:
            raise ValueError("min_samples_leaf must not exceed min_samples_split")
        if self.max_features not in ("all", "sqrt", "auto"):
            raise ValueError(f"unknown max_features {self.max_features!r}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.max_leaf_nodes is not None and self.max_leaf_nodes < 2:
            raise ValueError("max_leaf_nodes must be >= 2 or None")
        if self.leaf_smoothing < 0:
            raise ValueError("leaf_smoothing must be >= 0")


@dataclass(frozen=True)
class Tree:
    """A fitted tree packed into parallel node arrays (root at index 0).

    ``feature[i] == -1`` marks a leaf; ``value`` holds the positive-class
    probability for classification trees and the additive leaf weight for
    boosted regression trees.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    depth: np.ndarray
    n_features: int
    ledger: np.ndarray = field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def max_realized_depth(self) -> int:
        return int(self.depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected matrix with {self.n_features} columns, got shape {X.shape}"
            )
        return _kernels.tree_predict(
            self.feature, self.threshold, self.left, self.right, self.value, X
        )


def impurity(class_weights: tuple[float, float], criterion: str) -> float:
    """Impurity of a node holding the given (negative, positive) weight pair."""
    w_neg, w_pos = class_weights
    total = w_neg + w_pos
    if total <= 0:
        raise ValueError("total class weight must be positive")
    p1 = w_pos / total
    p0 = 1.0 - p1
    if CRITERIA[criterion] == _kernels.GINI:
        return 1.0 - p0 * p0 - p1 * p1
    e = 0.0
    if p0 > 0.0:
        e -= p0 * math.log2(p0)
    if p1 > 0.0:
        e -= p1 * math.log2(p1)
    return e


def best_split(X, y, w, candidate_features, criterion, min_samples_leaf=1):
    """Best (feature, threshold, gain) over the candidate features, or None.

    The gain is the node-local weighted impurity decrease
    ``imp(parent) - (W_L*imp(L) + W_R*imp(R)) / W``; splits that leave
    fewer than ``min_samples_leaf`` rows on either side or have gain <= 0
    are rejected.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    cand = np.sort(np.asarray(candidate_features, dtype=np.int64))
    feat, thr, gain, _ = _kernels.cart_best_split(
        X, y, w, cand, CRITERIA[criterion], min_samples_leaf
    )
    if feat < 0:
        return None
    return int(feat), float(thr), float(gain)


class _Grower:
    """Shared growth machinery for depth-first and best-first expansion."""

    def __init__(self, X, y, w, params: TreeParams, rng: np.random.Generator):
        self.X = X
        self.y = y
        self.w = w
        self.params = params
        self.rng = rng
        self.n_features = X.shape[1]
        self.criterion = CRITERIA[params.criterion]
        self.w_root = float(np.cumsum(w)[-1])
        self.ledger = np.zeros(self.n_features)
        # node storage
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.weight = []
        self.depth = []
        if params.max_features in ("sqrt", "auto"):
            self.n_cand = max(1, int(math.sqrt(self.n_features)))
        else:
            self.n_cand = self.n_features

    def new_node(self, rows, depth):
        idx = len(self.feature)
        w_node = float(np.cumsum(self.w[rows])[-1])
        w_pos = float(np.cumsum(self.w[rows] * self.y[rows])[-1])
        s = self.params.leaf_smoothing
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append((w_pos + s) / (w_node + 2.0 * s))
        self.weight.append(w_node)
        self.depth.append(depth)
        return idx, w_node, w_pos

    def candidates(self):
        if self.n_cand == self.n_features:
            return np.arange(self.n_features, dtype=np.int64)
        picked = self.rng.choice(self.n_features, size=self.n_cand, replace=False)
        return np.sort(picked.astype(np.int64))

    def find_split(self, rows, depth, w_node, w_pos):
        p = self.params
        if p.max_depth is not None and depth >= p.max_depth:
            return None
        if rows.size < p.min_samples_split:
            return None
        if w_pos <= 0.0 or w_pos >= w_node:
            return None
        Xn = np.ascontiguousarray(self.X[rows])
        feat, thr, gain, n_left = _kernels.cart_best_split(
            Xn, self.y[rows], self.w[rows], self.candidates(),
            self.criterion, p.min_samples_leaf,
        )
        if feat < 0:
            return None
        return feat, thr, gain, Xn[:, feat] <= thr

    def execute_split(self, node_idx, rows, split):
        feat, thr, gain, left_mask = split
        depth = self.depth[node_idx]
        self.ledger[feat] += (self.weight[node_idx] / self.w_root) * gain
        self.feature[node_idx] = feat
        self.threshold[node_idx] = thr
        li, lw, lp = self.new_node(rows[left_mask], depth + 1)
        ri, rw, rp = self.new_node(rows[~left_mask], depth + 1)
        self.left[node_idx] = li
        self.right[node_idx] = ri
        return (li, rows[left_mask], lw, lp), (ri, rows[~left_mask], rw, rp)

    def grow(self):
        rows = np.arange(self.X.shape[0], dtype=np.int64)
        root, w_node, w_pos = self.new_node(rows, 0)
        if self.params.max_leaf_nodes is None:
            self._grow_depth_first(root, rows, w_node, w_pos)
        else:
            self._grow_best_first(root, rows, w_node, w_pos)
        return self.pack()

    def _grow_depth_first(self, node_idx, rows, w_node, w_pos):
        stack = [(node_idx, rows, w_node, w_pos)]
        while stack:
            idx, r, wn, wp = stack.pop()
            split = self.find_split(r, self.depth[idx], wn, wp)
            if split is None:
                continue
            l, rnode = self.execute_split(idx, r, split)
            # right pushed first so the left child expands (and packs) first
            stack.append(rnode)
            stack.append(l)

    def _grow_best_first(self, node_idx, rows, w_node, w_pos):
        heap = []
        counter = 0

        def consider(idx, r, wn, wp):
            nonlocal counter
            split = self.find_split(r, self.depth[idx], wn, wp)
            if split is not None:
                heapq.heappush(heap, (-split[2], counter, idx, r, split))
                counter += 1

        n_leaves = 1
        consider(node_idx, rows, w_node, w_pos)
        while heap and n_leaves < self.params.max_leaf_nodes:
            _, _, idx, r, split = heapq.heappop(heap)
            l, rnode = self.execute_split(idx, r, split)
            n_leaves += 1
            consider(*l)
            consider(*rnode)

    def pack(self):
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
            weight=np.asarray(self.weight, dtype=np.float64),
            depth=np.asarray(self.depth, dtype=np.int64),
            n_features=self.n_features,
            ledger=self.ledger,
        )


def fit_tree(X, y, w, params: TreeParams, rng: np.random.Generator):
    """Grow a tree on the weighted rows; returns (Tree, per-feature ledger).

    With ``max_features="sqrt"`` each node draws floor(sqrt(n_cols))
    candidate features without replacement from ``rng``; with
    ``max_leaf_nodes`` set, expansion is best-first by gain.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if np.any(w < 0):
        raise ValueError("sample weights must be non-negative")
    if not np.any(w > 0):
        raise ValueError("sample weights must not all be zero")
    grower = _Grower(X, y, w, params, rng)
    tree = grower.grow()
    return tree, tree.ledger


def predict_proba_tree(tree: Tree, row) -> float:
    """Positive-class probability for a single feature vector."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.size != tree.n_features:
        raise ValueError(
            f"expected row of length {tree.n_features}, got shape {row.shape}"
        )
    return float(tree.predict(row[None, :])[0])
