"""Nested cross-validation: stratified outer folds for evaluation, inner
folds for hyperparameter selection, repeated with fresh fold assignments.

Every (repeat, fold, model, experiment) cell derives its own random
stream from the master seed, so serial and parallel executions produce
identical result matrices.  Preprocessing statistics and hyperparameter
choices for an outer test fold are computed from its outer-training rows
alone; a trace hook exposes exactly which row indices reach fitting
code (serial execution only).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import metrics
from .cart import TreeParams
from .datamodel import CohortTable
from .ensembles import (
    AdaBoostParams,
    ForestParams,
    GradBoostParams,
    fit_adaboost,
    fit_gradboost,
    fit_random_forest,
    predict_proba,
)
from .importance import ImportanceReport, aggregate_importance, model_importance
from .linear import LogisticParams, fit_logistic
from .preprocess import encode, fit_standardizer

ALGORITHMS = ("rf", "adaboost", "gradboost", "lr")
EXPERIMENTS = ("I", "II")
EXPERIMENT_MASKS = {"I": (), "II": ("bPEP", "bET")}
DISPLAY_NAMES = {"rf": "RF", "adaboost": "AdaBoost", "gradboost": "GradBoost", "lr": "LR"}


class StratificationWarning(UserWarning):
    """A class was too small for stratified folds; fell back to unstratified."""


class NestedCvError(RuntimeError):
    """A cell failed; carries the partially filled matrix for resuming."""

    def __init__(self, message: str, partial_matrix: "CvResultMatrix"):
        super().__init__(message)
        self.partial_matrix = partial_matrix


# ---------------------------------------------------------------------------
# fold plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OuterFold:
    test_indices: np.ndarray
    train_indices: np.ndarray
    inner_folds: tuple[tuple[np.ndarray, np.ndarray], ...]


@dataclass(frozen=True)
class FoldPlan:
    repeat_index: int
    outer: tuple[OuterFold, ...]


def _balanced_extra_assignment(fold_totals: np.ndarray, extra: int) -> list[int]:
    order = sorted(range(fold_totals.size), key=lambda f: (fold_totals[f], f))
    return order[:extra]


def _partition(indices_by_group: list[np.ndarray], k: int,
               rng: np.random.Generator) -> list[np.ndarray]:
    """Deal shuffled group members into k folds with sizes differing by <= 1."""
    folds: list[list[int]] = [[] for _ in range(k)]
    fold_totals = np.zeros(k, dtype=np.int64)
    for members in indices_by_group:
        members = rng.permutation(members)
        base, extra = divmod(members.size, k)
        counts = np.full(k, base, dtype=np.int64)
        for f in _balanced_extra_assignment(fold_totals, extra):
            counts[f] += 1
        start = 0
        for f in range(k):
            folds[f].extend(members[start:start + counts[f]].tolist())
            start += counts[f]
        fold_totals += counts
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


def _make_folds(indices: np.ndarray, labels: np.ndarray, k: int,
                rng: np.random.Generator, stratified: bool) -> list[np.ndarray]:
    if stratified:
        class_counts = [int(np.sum(labels[indices] == c)) for c in (0, 1)]
        if min(class_counts) < k:
            warnings.warn(
                f"class too small for stratified {k}-fold split "
                f"(counts {class_counts}); using unstratified folds",
                StratificationWarning,
                stacklevel=3,
            )
            stratified = False
    if stratified:
        groups = [indices[labels[indices] == c] for c in (0, 1)]
    else:
        groups = [indices]
    return _partition(groups, k, rng)


def make_fold_plan(n_rows: int, labels, master_seed: int, repeat_index: int,
                   n_outer: int = 10, n_inner: int = 5,
                   stratified: bool = True) -> FoldPlan:
    """Outer folds plus per-fold inner folds, derived from (seed, repeat)."""
    labels = np.asarray(labels)
    if n_rows < 2 * n_outer:
        raise ValueError(f"need at least {2 * n_outer} rows for {n_outer}-fold CV")
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, repeat_index]))
    all_indices = np.arange(n_rows, dtype=np.int64)
    outer_tests = _make_folds(all_indices, labels, n_outer, rng, stratified)
    outer = []
    for test_idx in outer_tests:
        train_idx = np.setdiff1d(all_indices, test_idx)
        inner_tests = _make_folds(train_idx, labels, n_inner, rng, stratified)
        inner = tuple(
            (np.setdiff1d(train_idx, val_idx), val_idx) for val_idx in inner_tests
        )
        outer.append(OuterFold(test_idx, train_idx, inner))
    return FoldPlan(repeat_index, tuple(outer))


# ---------------------------------------------------------------------------
# hyperparameter grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchSpace:
    """An ordered hyperparameter grid plus a search mode."""

    grid: tuple[tuple[str, tuple], ...]
    mode: str = "exhaustive"  # "exhaustive" | "randomized"
    budget: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("exhaustive", "randomized"):
            raise ValueError(f"unknown search mode {self.mode!r}")
        if self.mode == "randomized" and (self.budget is None or self.budget < 1):
            raise ValueError("randomized search needs budget >= 1")
        for name, values in self.grid:
            if len(values) == 0:
                raise ValueError(f"empty candidate list for {name!r}")

    @property
    def n_candidates(self) -> int:
        n = 1
        for _, values in self.grid:
            n *= len(values)
        return n

    def assignment(self, index: int) -> dict:
        out = {}
        for name, values in reversed(self.grid):
            index, pos = divmod(index, len(values))
            out[name] = values[pos]
        return {name: out[name] for name, _ in self.grid}

    def candidate_indices(self, rng: np.random.Generator) -> np.ndarray:
        total = self.n_candidates
        if self.mode == "exhaustive" or self.budget >= total:
            return np.arange(total, dtype=np.int64)
        picked = rng.choice(total, size=self.budget, replace=False)
        return np.sort(picked.astype(np.int64))


RF_GRID = (
    ("n_estimators", (20, 50, 150, 200, 250, 300, 350, 400, 500, 1000)),
    ("max_features", ("auto", "sqrt")),
    ("max_depth", (1, 3, 5, 6, 7, 12, 14, 16, 18)),
    ("min_samples_split", (2, 4, 6, 8, 10, 12, 14)),
    ("min_samples_leaf", (2, 3, 4, 5, 6, 7, 9, 12)),
    ("bootstrap", (True, False)),
    ("criterion", ("entropy", "gini")),
)
ADABOOST_GRID = (
    ("n_estimators", (20, 50, 100, 300, 400, 500, 1000)),
    ("learning_rate", (0.001, 0.01, 0.05, 0.1, 0.5)),
)
GRADBOOST_GRID = (
    ("n_estimators", (20, 50, 100, 300, 400, 500, 1000)),
    ("max_depth", (1, 3, 5, 6, 7, 10)),
    ("eta", (0.01, 0.03, 0.05, 0.1, 0.2)),
    ("min_child_weight", (0.1, 0.3, 0.5)),
    ("max_leaf_nodes", (4, 6, 9, 10)),
    ("subsample", (0.1, 0.5, 0.8, 1.0)),
    ("gamma", (0.01, 0.05, 0.1, 0.2, 0.5, 0.8)),
    ("alpha", (0.001, 0.01, 0.1, 0.5)),
    ("max_delta_step", (0, 1, 2, 5)),
    ("colsample_bytree", (0.5, 0.6, 0.8)),
    ("colsample_bylevel", (0.4, 0.6, 0.8)),
    ("colsample_bynode", (0.2, 0.3, 0.5, 0.8)),
    ("lam", (0.01, 0.05, 0.1, 0.3, 0.5)),
)
LR_GRID = (
    ("l2_strength", (0.01, 0.1, 1.0, 10.0)),
)

OPTIMUM_ASSIGNMENTS = {
    "rf": {
        "n_estimators": 250, "max_features": "sqrt", "max_depth": 3,
        "min_samples_split": 10, "min_samples_leaf": 6, "bootstrap": False,
        "criterion": "entropy",
    },
    "adaboost": {"n_estimators": 20, "learning_rate": 0.01},
    "gradboost": {
        "n_estimators": 100, "max_depth": 1, "eta": 0.1, "min_child_weight": 0.3,
        "max_leaf_nodes": 9, "subsample": 0.5, "gamma": 0.1, "alpha": 0.5,
        "max_delta_step": 2, "colsample_bytree": 0.5, "colsample_bylevel": 0.6,
        "colsample_bynode": 0.3, "lam": 0.05,
    },
    "lr": {"l2_strength": 1.0},
}


def default_space(algorithm: str, mode: Optional[str] = None,
                  budget: Optional[int] = None) -> SearchSpace:
    """Default grid per algorithm; full grids are searched exhaustively for
    the small spaces and with a randomized budget for the large ones."""
    grids = {"rf": RF_GRID, "adaboost": ADABOOST_GRID,
             "gradboost": GRADBOOST_GRID, "lr": LR_GRID}
    default_modes = {
        "rf": ("randomized", 200),
        "adaboost": ("exhaustive", None),
        "gradboost": ("randomized", 500),
        "lr": ("exhaustive", None),
    }
    dmode, dbudget = default_modes[algorithm]
    mode = mode or dmode
    if mode == "randomized":
        budget = budget or dbudget or 200
    else:
        budget = None
    return SearchSpace(grids[algorithm], mode, budget)


def build_params(algorithm: str, assignment: dict):
    """Turn a grid assignment into a parameter object (may raise on
    combinations that violate parameter invariants)."""
    if algorithm == "rf":
        return ForestParams(
            n_estimators=assignment["n_estimators"],
            bootstrap=assignment["bootstrap"],
            tree=TreeParams(
                max_depth=assignment["max_depth"],
                min_samples_split=assignment["min_samples_split"],
                min_samples_leaf=assignment["min_samples_leaf"],
                max_features=assignment["max_features"],
                criterion=assignment["criterion"],
            ),
        )
    if algorithm == "adaboost":
        return AdaBoostParams(
            n_estimators=assignment["n_estimators"],
            learning_rate=assignment["learning_rate"],
        )
    if algorithm == "gradboost":
        return GradBoostParams(
            n_estimators=assignment["n_estimators"],
            max_depth=assignment["max_depth"],
            eta=assignment["eta"],
            min_child_weight=assignment["min_child_weight"],
            max_leaf_nodes=assignment["max_leaf_nodes"],
            subsample=float(assignment["subsample"]),
            gamma=assignment["gamma"],
            alpha=assignment["alpha"],
            max_delta_step=float(assignment["max_delta_step"]),
            colsample_bytree=assignment["colsample_bytree"],
            colsample_bylevel=assignment["colsample_bylevel"],
            colsample_bynode=assignment["colsample_bynode"],
            lam=assignment["lam"],
        )
    if algorithm == "lr":
        return LogisticParams(l2_strength=assignment["l2_strength"])
    raise ValueError(f"unknown algorithm {algorithm!r}")


def fit_algorithm(algorithm: str, matrix, params, rng: np.random.Generator):
    if algorithm == "rf":
        return fit_random_forest(matrix, params, rng)
    if algorithm == "adaboost":
        return fit_adaboost(matrix, params, rng)
    if algorithm == "gradboost":
        return fit_gradboost(matrix, params, rng)
    if algorithm == "lr":
        return fit_logistic(matrix, params)
    raise ValueError(f"unknown algorithm {algorithm!r}")


# ---------------------------------------------------------------------------
# result matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellResult:
    test: metrics.MetricSet
    train: metrics.MetricSet
    params_text: str


class CvResultMatrix:
    """Metric values indexed by (repeat, fold, model, experiment)."""

    def __init__(self):
        self.cells: dict[tuple[int, int, str, str], CellResult] = {}

    def add(self, repeat: int, fold: int, model: str, experiment: str,
            result: CellResult) -> None:
        self.cells[(repeat, fold, model, experiment)] = result

    def has(self, repeat: int, fold: int, model: str, experiment: str) -> bool:
        return (repeat, fold, model, experiment) in self.cells

    def keys_for(self, model: str, experiment: str) -> list[tuple[int, int]]:
        out = sorted(
            (r, f) for (r, f, m, e) in self.cells if m == model and e == experiment
        )
        return out

    def metric_vector(self, model: str, experiment: str, metric: str,
                      split: str = "test") -> np.ndarray:
        """Values aligned by sorted (repeat, fold), the pairing used by the
        cross-model statistical tests."""
        keys = self.keys_for(model, experiment)
        out = np.empty(len(keys))
        for i, (r, f) in enumerate(keys):
            cell = self.cells[(r, f, model, experiment)]
            out[i] = getattr(cell.test if split == "test" else cell.train, metric)
        return out

    def summary(self, model: str, experiment: str, metric: str,
                split: str = "test") -> tuple[float, float]:
        v = self.metric_vector(model, experiment, metric, split)
        v = v[~np.isnan(v)]
        if v.size == 0:
            return math.nan, math.nan
        sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        return float(np.mean(v)), sd

    def models(self) -> list[str]:
        seen = []
        for (_, _, m, _) in sorted(self.cells):
            if m not in seen:
                seen.append(m)
        return sorted(seen, key=lambda m: ALGORITHMS.index(m))

    def experiments(self) -> list[str]:
        return sorted({e for (_, _, _, e) in self.cells})

    # -- persistence ---------------------------------------------------

    CSV_HEADER = ("repeat", "fold", "model", "experiment", "split",
                  "metric", "value", "params")

    def to_csv(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with tmp.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.CSV_HEADER)
            for key in sorted(self.cells):
                r, f, m, e = key
                cell = self.cells[key]
                for split, ms in (("test", cell.test), ("train", cell.train)):
                    for metric_name in metrics.METRIC_NAMES:
                        writer.writerow([
                            r, f, m, e, split, metric_name,
                            repr(getattr(ms, metric_name)), cell.params_text,
                        ])
                    for count_name in ("tp", "fp", "tn", "fn"):
                        writer.writerow([
                            r, f, m, e, split, count_name,
                            repr(getattr(ms, count_name)), cell.params_text,
                        ])
        tmp.replace(path)

    @classmethod
    def from_csv(cls, path) -> "CvResultMatrix":
        rows: dict[tuple[int, int, str, str], dict] = {}
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != cls.CSV_HEADER:
                raise ValueError(f"unexpected matrix header {header!r}")
            for record in reader:
                r, f, m, e, split, metric_name, value, params = record
                key = (int(r), int(f), m, e)
                entry = rows.setdefault(key, {"params": params, "test": {}, "train": {}})
                entry[split][metric_name] = float(value)
        out = cls()
        for key, entry in rows.items():
            sets = {}
            for split in ("test", "train"):
                vals = entry[split]
                sets[split] = metrics.MetricSet(
                    auc=vals["auc"], accuracy=vals["accuracy"],
                    sensitivity=vals["sensitivity"],
                    specificity=vals["specificity"], precision=vals["precision"],
                    tp=int(vals["tp"]), fp=int(vals["fp"]),
                    tn=int(vals["tn"]), fn=int(vals["fn"]),
                )
            out.add(*key, CellResult(sets["test"], sets["train"], entry["params"]))
        return out


# ---------------------------------------------------------------------------
# inner selection and the nested loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceEvent:
    phase: str
    repeat: int
    fold: int
    algorithm: str
    row_indices: np.ndarray


def inner_select(cohort: CohortTable, outer_fold: OuterFold, space: SearchSpace,
                 algorithm: str, mask: tuple[str, ...],
                 rng: np.random.Generator,
                 trace: Optional[Callable] = None,
                 repeat: int = -1, fold: int = -1) -> dict:
    """Mean inner-validation AUC per candidate; returns the argmax
    assignment (ties resolve to enumeration order)."""
    indices = space.candidate_indices(rng)
    encoded_folds = []
    for inner_train, inner_val in outer_fold.inner_folds:
        std = fit_standardizer(cohort.select(inner_train))
        if trace is not None:
            trace(TraceEvent("inner_standardizer", repeat, fold, algorithm, inner_train))
        train_m = encode(cohort.select(inner_train), std, mask)
        val_m = encode(cohort.select(inner_val), std, mask)
        encoded_folds.append((train_m, val_m))

    best_score = -math.inf
    best_assignment = None
    any_trained = False
    for cand in indices:
        assignment = space.assignment(int(cand))
        try:
            params = build_params(algorithm, assignment)
        except ValueError:
            continue
        scores = []
        try:
            for train_m, val_m in encoded_folds:
                if trace is not None:
                    trace(TraceEvent("inner_fit", repeat, fold, algorithm,
                                     train_m.row_indices))
                model = fit_algorithm(algorithm, train_m, params, rng.spawn(1)[0])
                scores.append(metrics.auc(predict_proba(model, val_m), val_m.labels))
        except ValueError:
            continue
        any_trained = True
        mean_auc = float(np.mean(scores))
        if mean_auc > best_score:
            best_score = mean_auc
            best_assignment = assignment
    if best_assignment is None:
        detail = "no candidate could be trained" if not any_trained else "no finite score"
        raise RuntimeError(f"inner selection failed for {algorithm}: {detail}")
    return best_assignment


def _cell_seed(master_seed: int, repeat: int, fold: int, algorithm: str,
               experiment: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([
        master_seed, repeat, fold,
        ALGORITHMS.index(algorithm), EXPERIMENTS.index(experiment),
    ])


def run_cell(cohort: CohortTable, outer_fold: OuterFold, algorithm: str,
             experiment: str, mask: tuple[str, ...], master_seed: int,
             repeat: int, fold: int, space: Optional[SearchSpace],
             fixed_assignment: Optional[dict], threshold: float,
             trace: Optional[Callable] = None):
    """Select, refit on the full outer-training split, and evaluate."""
    rng = np.random.default_rng(_cell_seed(master_seed, repeat, fold,
                                           algorithm, experiment))
    if fixed_assignment is not None:
        assignment = fixed_assignment
    else:
        assignment = inner_select(cohort, outer_fold, space, algorithm, mask,
                                  rng, trace, repeat, fold)
    params = build_params(algorithm, assignment)

    std = fit_standardizer(cohort.select(outer_fold.train_indices))
    if trace is not None:
        trace(TraceEvent("standardizer", repeat, fold, algorithm,
                         outer_fold.train_indices))
    train_m = encode(cohort.select(outer_fold.train_indices), std, mask)
    test_m = encode(cohort.select(outer_fold.test_indices), std, mask)
    if trace is not None:
        trace(TraceEvent("fit", repeat, fold, algorithm, train_m.row_indices))
    model = fit_algorithm(algorithm, train_m, params, rng.spawn(1)[0])

    test_scores = predict_proba(model, test_m)
    train_scores = predict_proba(model, train_m)
    cell = CellResult(
        test=metrics.evaluate(test_scores, test_m.labels, threshold),
        train=metrics.evaluate(train_scores, train_m.labels, threshold),
        params_text=json.dumps(assignment, sort_keys=True),
    )

    imp_values = None
    if model.ledger is not None:
        imp_values = model_importance(model).values
    roc_tpr = None
    if np.unique(test_m.labels).size == 2:
        roc_tpr = metrics.tpr_at_grid(metrics.roc_curve(test_scores, test_m.labels))
    return cell, imp_values, roc_tpr, tuple(test_m.columns)


def _pool_cell(args):
    return args[0], run_cell(*args[1])


@dataclass
class RunResult:
    matrix: CvResultMatrix
    importance: dict[str, ImportanceReport]
    mean_roc: dict[str, np.ndarray]
    experiments: tuple[str, ...]
    models: tuple[str, ...]


def run_nested_cv(cohort: CohortTable, algorithms=ALGORITHMS,
                  experiments=("I",), master_seed: int = 1,
                  n_repeats: int = 10, n_outer: int = 10, n_inner: int = 5,
                  fixed_params: bool = False,
                  spaces: Optional[dict[str, SearchSpace]] = None,
                  threshold: float = 0.5, stratified: bool = True,
                  jobs: int = 1, trace: Optional[Callable] = None,
                  resume: Optional[CvResultMatrix] = None,
                  extra_mask: tuple[str, ...] = ()) -> RunResult:
    """Full nested loop over repeats, folds, models, and experiments.

    ``fixed_params`` skips inner selection and trains with the tuned
    default assignment for each algorithm (the cheap reproduction path).
    ``extra_mask`` is applied on top of each experiment's own mask.
    ``trace`` is honored only for serial execution (jobs == 1).
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    algorithms = tuple(algorithms)
    experiments = tuple(experiments)
    spaces = spaces or {}
    matrix = CvResultMatrix()
    if resume is not None:
        matrix.cells.update(resume.cells)

    plans = [
        make_fold_plan(cohort.n_rows, cohort.y, master_seed, r,
                       n_outer, n_inner, stratified)
        for r in range(n_repeats)
    ]

    tasks = []
    for experiment in experiments:
        mask = tuple(dict.fromkeys(EXPERIMENT_MASKS[experiment] + tuple(extra_mask)))
        for algorithm in algorithms:
            space = None
            fixed = None
            if fixed_params:
                fixed = OPTIMUM_ASSIGNMENTS[algorithm]
            else:
                space = spaces.get(algorithm) or default_space(algorithm)
            for plan in plans:
                for fold_idx, outer_fold in enumerate(plan.outer):
                    key = (plan.repeat_index, fold_idx, algorithm, experiment)
                    if matrix.has(*key):
                        continue
                    tasks.append((key, (
                        cohort, outer_fold, algorithm, experiment, mask,
                        master_seed, plan.repeat_index, fold_idx, space,
                        fixed, threshold, trace if jobs == 1 else None,
                    )))

    imp_cells: dict[str, list] = {a: [] for a in algorithms}
    roc_cells: dict[str, list] = {a: [] for a in algorithms}
    imp_columns: dict[str, tuple] = {}

    def consume(key, outcome):
        cell, imp_values, roc_tpr, columns = outcome
        matrix.add(*key, cell)
        algorithm = key[2]
        if key[3] == experiments[0]:
            if imp_values is not None:
                imp_cells[algorithm].append(imp_values)
                imp_columns[algorithm] = columns
            if roc_tpr is not None:
                roc_cells[algorithm].append(roc_tpr)

    def cell_error(key, exc):
        return NestedCvError(
            f"cell failed at repeat {key[0]}, fold {key[1]}, "
            f"model {key[2]}, experiment {key[3]}: {exc}",
            matrix,
        )

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_pool_cell, task): task[0] for task in tasks}
            for future, key in futures.items():
                try:
                    consume(*future.result())
                except Exception as exc:
                    raise cell_error(key, exc) from exc
    else:
        for key, args in tasks:
            try:
                consume(key, run_cell(*args))
            except Exception as exc:
                raise cell_error(key, exc) from exc

    importance = {}
    for algorithm in algorithms:
        if imp_cells[algorithm]:
            reports = [
                ImportanceReport(algorithm, imp_columns[algorithm], v,
                                 np.argsort(np.argsort(-v)) + 1)
                for v in imp_cells[algorithm]
            ]
            importance[algorithm] = aggregate_importance(reports)
    grid = metrics.DEFAULT_FPR_GRID
    mean_roc = {
        a: np.vstack([grid, np.mean(roc_cells[a], axis=0)]).T
        for a in algorithms if roc_cells[a]
    }
    return RunResult(matrix, importance, mean_roc, experiments, algorithms)
