"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The split-finding scans dominate the runtime of a cross-validation run
(tens of thousands of tree fits), so they are compiled with ``numba.njit``
when available.  Setting the environment variable ``AMIRISK_BACKEND`` to
``numpy`` forces the fallback path; ``numba`` demands the compiled path
(raising if numba cannot be imported); the default ``auto`` picks numba
when importable.

Both backends perform the same floating-point operations in the same
order (sequential prefix sums over mergesort-ordered rows), so fitted
trees are identical across backends up to last-ulp differences in log2.
"""

from __future__ import annotations

import os

import numpy as np

GINI = 0
ENTROPY = 1

_NO_SPLIT = (-1, np.nan, 0.0, 0)


# ---------------------------------------------------------------------------
# pure-numpy fallback implementations
# ---------------------------------------------------------------------------

def _impurity_vec(total, pos, criterion):
    """Vectorized impurity of nodes with weight `total` and positive weight `pos`."""
    p1 = pos / total
    p0 = 1.0 - p1
    if criterion == GINI:
        return 1.0 - p0 * p0 - p1 * p1
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = np.where(p0 > 0.0, p0 * np.log2(np.where(p0 > 0.0, p0, 1.0)), 0.0)
        t1 = np.where(p1 > 0.0, p1 * np.log2(np.where(p1 > 0.0, p1, 1.0)), 0.0)
    return -(t0 + t1)


def cart_best_split_numpy(X, y, w, cand, criterion, min_leaf):
    """Best weighted-impurity split over candidate feature columns.

    Returns ``(feature, threshold, gain, n_left)`` with ``feature == -1``
    when no admissible split with positive gain exists.  Thresholds are
    midpoints between consecutive distinct sorted values; ties resolve to
    the lowest feature index, then the lowest threshold.
    """
    n = X.shape[0]
    wy = w * y
    # sequential sums so both backends accumulate in the same order
    total_w = float(np.cumsum(w)[-1])
    total_p = float(np.cumsum(wy)[-1])
    parent = float(_impurity_vec(np.float64(total_w), np.float64(total_p), criterion))

    best_feat, best_thr, best_gain, best_nleft = _NO_SPLIT
    counts = np.arange(1, n, dtype=np.int64)
    for f in cand:
        x = X[:, f]
        order = np.argsort(x, kind="mergesort")
        xs = x[order]
        wl = np.cumsum(w[order])[:-1]
        pl = np.cumsum(wy[order])[:-1]
        wr = total_w - wl
        pr = total_p - pl
        valid = (xs[1:] > xs[:-1]) & (counts >= min_leaf) & (n - counts >= min_leaf)
        valid &= (wl > 0.0) & (wr > 0.0)
        if not valid.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            child = wl * _impurity_vec(wl, pl, criterion) + wr * _impurity_vec(wr, pr, criterion)
        gain = np.where(valid, parent - child / total_w, -np.inf)
        i = int(np.argmax(gain))
        g = float(gain[i])
        if g > best_gain:
            best_gain = g
            best_feat = int(f)
            best_thr = 0.5 * (xs[i] + xs[i + 1])
            best_nleft = i + 1
    return best_feat, best_thr, best_gain, best_nleft


def grad_best_split_numpy(X, g, h, cand, lam, gamma, min_child_weight):
    """Best second-order split: 0.5*(GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)) - gamma.

    Splits whose gain is <= 0 or whose child hessian sum falls below
    ``min_child_weight`` are rejected.
    """
    n = X.shape[0]
    G = float(np.cumsum(g)[-1])
    H = float(np.cumsum(h)[-1])
    parent_score = G * G / (H + lam)

    best_feat, best_thr, best_gain, best_nleft = _NO_SPLIT
    for f in cand:
        x = X[:, f]
        order = np.argsort(x, kind="mergesort")
        xs = x[order]
        gl = np.cumsum(g[order])[:-1]
        hl = np.cumsum(h[order])[:-1]
        gr = G - gl
        hr = H - hl
        valid = (xs[1:] > xs[:-1]) & (hl >= min_child_weight) & (hr >= min_child_weight)
        if not valid.any():
            continue
        gain = np.where(
            valid,
            0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score) - gamma,
            -np.inf,
        )
        i = int(np.argmax(gain))
        gn = float(gain[i])
        if gn > best_gain:
            best_gain = gn
            best_feat = int(f)
            best_thr = 0.5 * (xs[i] + xs[i + 1])
            best_nleft = i + 1
    return best_feat, best_thr, best_gain, best_nleft


def tree_predict_numpy(feature, threshold, left, right, value, X):
    """Route every row of X through a packed tree; returns leaf values."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    while True:
        f = feature[node]
        active = f >= 0
        if not active.any():
            break
        idx = rows[active]
        cur = node[active]
        go_left = X[idx, f[active]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
    return value[node]


# ---------------------------------------------------------------------------
# numba implementations (same arithmetic, loop form)
# ---------------------------------------------------------------------------

def _build_numba():
    from numba import njit

    @njit(cache=True, nogil=True)
    def _impurity(total, pos, criterion):
        p1 = pos / total
        p0 = 1.0 - p1
        if criterion == GINI:
            return 1.0 - p0 * p0 - p1 * p1
        e = 0.0
        if p0 > 0.0:
            e -= p0 * np.log2(p0)
        if p1 > 0.0:
            e -= p1 * np.log2(p1)
        return e

    @njit(cache=True, nogil=True)
    def cart_best_split(X, y, w, cand, criterion, min_leaf):
        n = X.shape[0]
        total_w = 0.0
        total_p = 0.0
        for i in range(n):
            total_w += w[i]
            total_p += w[i] * y[i]
        parent = _impurity(total_w, total_p, criterion)

        best_feat = -1
        best_thr = np.nan
        best_gain = 0.0
        best_nleft = 0
        for ci in range(cand.size):
            f = cand[ci]
            x = X[:, f]
            order = np.argsort(x, kind="mergesort")
            wl = 0.0
            pl = 0.0
            for i in range(n - 1):
                j = order[i]
                wl += w[j]
                pl += w[j] * y[j]
                xj = x[j]
                xn = x[order[i + 1]]
                if xn <= xj:
                    continue
                nl = i + 1
                if nl < min_leaf or n - nl < min_leaf:
                    continue
                wr = total_w - wl
                pr = total_p - pl
                if wl <= 0.0 or wr <= 0.0:
                    continue
                child = wl * _impurity(wl, pl, criterion) + wr * _impurity(wr, pr, criterion)
                gain = parent - child / total_w
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = 0.5 * (xj + xn)
                    best_nleft = nl
        return best_feat, best_thr, best_gain, best_nleft

    @njit(cache=True, nogil=True)
    def grad_best_split(X, g, h, cand, lam, gamma, min_child_weight):
        n = X.shape[0]
        G = 0.0
        H = 0.0
        for i in range(n):
            G += g[i]
            H += h[i]
        parent_score = G * G / (H + lam)

        best_feat = -1
        best_thr = np.nan
        best_gain = 0.0
        best_nleft = 0
        for ci in range(cand.size):
            f = cand[ci]
            x = X[:, f]
            order = np.argsort(x, kind="mergesort")
            gl = 0.0
            hl = 0.0
            for i in range(n - 1):
                j = order[i]
                gl += g[j]
                hl += h[j]
                xj = x[j]
                xn = x[order[i + 1]]
                if xn <= xj:
                    continue
                gr = G - gl
                hr = H - hl
                if hl < min_child_weight or hr < min_child_weight:
                    continue
                gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score) - gamma
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = 0.5 * (xj + xn)
                    best_nleft = i + 1
        return best_feat, best_thr, best_gain, best_nleft

    @njit(cache=True, nogil=True)
    def tree_predict(feature, threshold, left, right, value, X):
        n = X.shape[0]
        out = np.empty(n, dtype=np.float64)
        for r in range(n):
            node = 0
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = value[node]
        return out

    return cart_best_split, grad_best_split, tree_predict


def _select_backend():
    requested = os.environ.get("AMIRISK_BACKEND", "auto").lower()
    if requested not in {"auto", "numba", "numpy"}:
        raise ValueError(f"AMIRISK_BACKEND must be auto, numba or numpy, got {requested!r}")
    if requested == "numpy":
        return "numpy", None
    try:
        funcs = _build_numba()
    except ImportError:
        if requested == "numba":
            raise
        return "numpy", None
    return "numba", funcs


ACTIVE_BACKEND, _numba_funcs = _select_backend()

if ACTIVE_BACKEND == "numba":
    cart_best_split, grad_best_split, tree_predict = _numba_funcs
else:
    cart_best_split = cart_best_split_numpy
    grad_best_split = grad_best_split_numpy
    tree_predict = tree_predict_numpy


def numba_kernels():
    """Compiled kernel triple, or None when numba is unavailable.

    Lets tests and benchmarks compare both backends regardless of which
    one is active.
    """
    global _numba_funcs
    if _numba_funcs is None:
        try:
            _numba_funcs = _build_numba()
        except ImportError:
            return None
    return _numba_funcs
