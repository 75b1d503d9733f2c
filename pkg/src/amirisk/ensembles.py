"""Random forest, AdaBoost, and second-order regularized gradient boosting.

Every fitter derives one random stream per tree from the generator it is
handed (``rng.spawn``), so fitted models do not depend on scheduling
order.  AdaBoost scores are the sigmoid of the signed weighted stump
vote: a ranking score, not a calibrated probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from . import _kernels
from .cart import Tree, TreeParams, fit_tree
from .preprocess import DesignMatrix


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 250
    bootstrap: bool = False
    tree: TreeParams = field(default_factory=lambda: TreeParams(
        max_depth=3, min_samples_split=10, min_samples_leaf=6,
        max_features="sqrt", criterion="entropy",
    ))

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")


@dataclass(frozen=True)
class AdaBoostParams:
    n_estimators: int = 20
    learning_rate: float = 0.01
    tree: TreeParams = field(default_factory=lambda: TreeParams(max_depth=1))

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class GradBoostParams:
    n_estimators: int = 100
    max_depth: int = 1
    eta: float = 0.1
    min_child_weight: float = 0.3
    max_leaf_nodes: int = 9
    subsample: float = 0.5
    gamma: float = 0.1
    alpha: float = 0.5
    lam: float = 0.05
    max_delta_step: float = 2.0
    colsample_bytree: float = 0.5
    colsample_bylevel: float = 0.6
    colsample_bynode: float = 0.3

    def __post_init__(self):
        for name in ("subsample", "colsample_bytree", "colsample_bylevel",
                     "colsample_bynode"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        for name in ("eta", "gamma", "alpha", "lam", "min_child_weight",
                     "max_delta_step"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_estimators < 1 or self.max_depth < 1 or self.max_leaf_nodes < 2:
            raise ValueError("n_estimators, max_depth >= 1 and max_leaf_nodes >= 2 required")


@dataclass(frozen=True)
class TrainedModel:
    """An immutable fitted classifier.

    ``ledger`` accumulates per-column impurity (or boosting-gain)
    decreases; for AdaBoost the per-stump ledgers are weighted by the
    stump coefficients.
    """

    algorithm: str
    columns: tuple[str, ...]
    trees: tuple[Tree, ...] = ()
    tree_coefs: Optional[np.ndarray] = None
    base_score: float = 0.0
    coef: Optional[np.ndarray] = None
    intercept: float = 0.0
    ledger: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)


def _check_two_classes(labels: np.ndarray, algorithm: str):
    if np.unique(labels).size < 2:
        raise ValueError(f"{algorithm}: training data contains a single class")


def _check_columns(model: TrainedModel, matrix: DesignMatrix):
    if tuple(matrix.columns) != tuple(model.columns):
        missing = set(model.columns) - set(matrix.columns)
        extra = set(matrix.columns) - set(model.columns)
        raise ValueError(
            f"column mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
        )


def fit_random_forest(matrix: DesignMatrix, params: ForestParams,
                      rng: np.random.Generator) -> TrainedModel:
    """Bagged trees; with bootstrap=False every tree sees the full data
    and all randomness comes from per-node feature subsampling."""
    _check_two_classes(matrix.labels, "random forest")
    X = matrix.values
    y = matrix.labels.astype(np.float64)
    n = X.shape[0]
    trees = []
    ledger = np.zeros(X.shape[1])
    for child in rng.spawn(params.n_estimators):
        if params.bootstrap:
            idx = np.sort(child.integers(0, n, size=n))
            Xi, yi = X[idx], y[idx]
        else:
            Xi, yi = X, y
        tree, tree_ledger = fit_tree(Xi, yi, np.ones(len(yi)), params.tree, child)
        trees.append(tree)
        ledger += tree_ledger
    return TrainedModel("rf", tuple(matrix.columns), trees=tuple(trees),
                        ledger=ledger)


def fit_adaboost(matrix: DesignMatrix, params: AdaBoostParams,
                 rng: np.random.Generator) -> TrainedModel:
    """Discrete two-class boosting over weighted stumps.

    Rounds with weighted error >= 0.5 stop the sequence; a perfect round
    (error 0) is retained with a capped coefficient and also stops it.
    """
    _check_two_classes(matrix.labels, "adaboost")
    X = matrix.values
    y = matrix.labels.astype(np.float64)
    sign = 2.0 * y - 1.0
    n = X.shape[0]
    w = np.full(n, 1.0 / n)
    eps_floor = 1e-8

    trees = []
    alphas = []
    errors = []
    for child in rng.spawn(params.n_estimators):
        stump, stump_ledger = fit_tree(X, y, w, params.tree, child)
        pred_sign = np.where(stump.predict(X) >= 0.5, 1.0, -1.0)
        miss = pred_sign != sign
        eps = float(np.sum(w[miss]))
        if eps >= 0.5:
            break
        if eps <= 0.0:
            alphas.append(params.learning_rate * math.log((1.0 - eps_floor) / eps_floor))
            trees.append(stump)
            errors.append(eps)
            break
        alpha = params.learning_rate * math.log((1.0 - eps) / eps)
        trees.append(stump)
        alphas.append(alpha)
        errors.append(eps)
        w = w * np.exp(alpha * miss)
        w = w / np.sum(w)

    alphas = np.asarray(alphas, dtype=np.float64)
    ledger = np.zeros(X.shape[1])
    for a, t in zip(alphas, trees):
        ledger += a * t.ledger
    return TrainedModel("adaboost", tuple(matrix.columns), trees=tuple(trees),
                        tree_coefs=alphas, ledger=ledger,
                        extra={"round_errors": errors})


def _soft_threshold(g: float, alpha: float) -> float:
    if g > alpha:
        return g - alpha
    if g < -alpha:
        return g + alpha
    return 0.0


class _GradTreeGrower:
    """Best-first growth on gradient/hessian sums with a depth cap.

    Column pools are drawn up front for every depth level so the fitted
    tree does not depend on expansion order.
    """

    def __init__(self, X, g, h, params: GradBoostParams, rng: np.random.Generator):
        self.X = X
        self.g = g
        self.h = h
        self.p = params
        n_features = X.shape[1]
        tree_cols = _draw(rng, np.arange(n_features), params.colsample_bytree)
        self.level_pools = [
            _draw(rng, tree_cols, params.colsample_bylevel)
            for _ in range(params.max_depth)
        ]
        self.rng = rng
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.weight = []
        self.depth = []
        self.ledger = np.zeros(n_features)

    def leaf_value(self, gs: float, hs: float) -> float:
        p = self.p
        w = -_soft_threshold(gs, p.alpha) / (hs + p.lam)
        if p.max_delta_step > 0.0:
            w = min(max(w, -p.max_delta_step), p.max_delta_step)
        return p.eta * w

    def new_node(self, rows, depth):
        idx = len(self.feature)
        gs = float(np.cumsum(self.g[rows])[-1])
        hs = float(np.cumsum(self.h[rows])[-1])
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(self.leaf_value(gs, hs))
        self.weight.append(hs)
        self.depth.append(depth)
        return idx

    def find_split(self, rows, depth):
        if depth >= self.p.max_depth:
            return None
        cand = _draw(self.rng, self.level_pools[depth], self.p.colsample_bynode)
        Xn = np.ascontiguousarray(self.X[rows])
        feat, thr, gain, _ = _kernels.grad_best_split(
            Xn, self.g[rows], self.h[rows], cand,
            self.p.lam, self.p.gamma, self.p.min_child_weight,
        )
        if feat < 0:
            return None
        return feat, thr, gain, Xn[:, feat] <= thr

    def grow(self) -> Tree:
        import heapq

        rows = np.arange(self.X.shape[0], dtype=np.int64)
        root = self.new_node(rows, 0)
        heap = []
        counter = 0

        def consider(idx, r):
            nonlocal counter
            split = self.find_split(r, self.depth[idx])
            if split is not None:
                heapq.heappush(heap, (-split[2], counter, idx, r, split))
                counter += 1

        n_leaves = 1
        consider(root, rows)
        while heap and n_leaves < self.p.max_leaf_nodes:
            _, _, idx, r, split = heapq.heappop(heap)
            feat, thr, gain, left_mask = split
            self.ledger[feat] += gain
            self.feature[idx] = feat
            self.threshold[idx] = thr
            li = self.new_node(r[left_mask], self.depth[idx] + 1)
            ri = self.new_node(r[~left_mask], self.depth[idx] + 1)
            self.left[idx] = li
            self.right[idx] = ri
            n_leaves += 1
            consider(li, r[left_mask])
            consider(ri, r[~left_mask])

        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
            weight=np.asarray(self.weight, dtype=np.float64),
            depth=np.asarray(self.depth, dtype=np.int64),
            n_features=self.X.shape[1],
            ledger=self.ledger,
        )


def _draw(rng: np.random.Generator, pool: np.ndarray, rate: float) -> np.ndarray:
    """Sample floor(rate * len(pool)) entries without replacement, at least one."""
    if rate >= 1.0:
        return np.asarray(pool, dtype=np.int64)
    size = max(1, int(rate * len(pool)))
    return np.sort(rng.choice(pool, size=size, replace=False).astype(np.int64))


def fit_gradboost(matrix: DesignMatrix, params: GradBoostParams,
                  rng: np.random.Generator) -> TrainedModel:
    """Boosted trees on the logistic loss with second-order statistics.

    Leaf weights soft-threshold the gradient sum by ``alpha`` before the
    lambda-damped division, are clipped to ``max_delta_step`` when that
    cap is nonzero, and are scaled by ``eta``.  The initial score is the
    log-odds of the training base rate.
    """
    _check_two_classes(matrix.labels, "gradient boosting")
    X = matrix.values
    y = matrix.labels.astype(np.float64)
    n = X.shape[0]
    base_rate = float(np.mean(y))
    base_score = math.log(base_rate / (1.0 - base_rate))
    f = np.full(n, base_score)

    trees = []
    ledger = np.zeros(X.shape[1])
    losses = []
    for child in rng.spawn(params.n_estimators):
        p = expit(f)
        losses.append(float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
        g = p - y
        h = p * (1.0 - p)
        if params.subsample < 1.0:
            m = max(1, int(params.subsample * n))
            rows = np.sort(child.choice(n, size=m, replace=False))
        else:
            rows = np.arange(n)
        grower = _GradTreeGrower(X[rows], g[rows], h[rows], params, child)
        tree = grower.grow()
        trees.append(tree)
        ledger += tree.ledger
        f = f + tree.predict(X)
    p = expit(f)
    losses.append(float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))

    return TrainedModel("gradboost", tuple(matrix.columns), trees=tuple(trees),
                        base_score=base_score, ledger=ledger,
                        extra={"train_loss_per_round": losses})


def decision_scores(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Raw per-row scores in [0, 1] for an already-validated matrix."""
    if model.algorithm == "rf":
        acc = np.zeros(X.shape[0])
        for tree in model.trees:
            acc += tree.predict(X)
        return acc / len(model.trees)
    if model.algorithm == "adaboost":
        margin = np.zeros(X.shape[0])
        for alpha, tree in zip(model.tree_coefs, model.trees):
            margin += alpha * np.where(tree.predict(X) >= 0.5, 1.0, -1.0)
        return expit(margin)
    if model.algorithm == "gradboost":
        f = np.full(X.shape[0], model.base_score)
        for tree in model.trees:
            f += tree.predict(X)
        return expit(f)
    if model.algorithm == "lr":
        return expit(model.intercept + X @ model.coef)
    raise ValueError(f"unknown algorithm {model.algorithm!r}")


def predict_proba(model: TrainedModel, matrix: DesignMatrix) -> np.ndarray:
    """Per-row score in [0, 1]; errors on any column-name mismatch."""
    _check_columns(model, matrix)
    return decision_scores(model, matrix.values)
