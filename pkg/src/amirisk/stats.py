"""Hypothesis tests used by the cohort summary and the CV comparison.

Student-t, F and chi-square tail probabilities are computed through the
regularized incomplete beta/gamma functions; the studentized range
distribution (which has no closed form) is integrated numerically with
Gauss-Legendre quadrature to ~1e-6 absolute accuracy in p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

STAR_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


@dataclass(frozen=True)
class TestResult:
    """Outcome of a single hypothesis test.

    ``p_value`` is NaN when the test is undefined for the given data
    (degenerate variance); ``stars`` follow the 0.05 / 0.01 / 0.001
    convention.
    """

    statistic: float
    df: tuple[float, ...]
    p_value: float
    name: str = ""

    @property
    def undefined(self) -> bool:
        return math.isnan(self.p_value)

    @property
    def stars(self) -> str:
        if self.undefined:
            return ""
        for level, mark in STAR_LEVELS:
            if self.p_value < level:
                return mark
        return ""

    @property
    def significant(self) -> bool:
        return (not self.undefined) and self.p_value < 0.05


# ---------------------------------------------------------------------------
# distribution functions
# ---------------------------------------------------------------------------

def student_t_cdf(x: float, df: float) -> float:
    """P(T <= x) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if x == 0.0:
        return 0.5
    tail = 0.5 * special.betainc(df / 2.0, 0.5, df / (df + x * x))
    return 1.0 - tail if x > 0 else tail


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|)."""
    if df <= 0:
        raise ValueError("df must be positive")
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def f_sf(x: float, d1: float, d2: float) -> float:
    """P(F >= x) for the F distribution with (d1, d2) degrees of freedom."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0:
        return 1.0
    return float(special.betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x)))


def chi2_sf(x: float, df: float) -> float:
    """P(X >= x) for the chi-square distribution."""
    if df <= 0:
        raise ValueError("df must be positive")
    if x <= 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def _gauss_legendre(a: float, b: float, n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return mid + half * nodes, half * weights


def _range_cdf_std(u: float, k: int, n_inner: int = 200) -> float:
    """CDF of the range of k iid standard normals at u."""
    if u <= 0:
        return 0.0
    z, wz = _gauss_legendre(-9.0, 9.0 + u, n_inner)
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    inner = (special.ndtr(z) - special.ndtr(z - u)) ** (k - 1)
    return float(k * np.sum(wz * phi * inner))


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    """P(Q <= q) for the studentized range of k groups with ``df`` error df.

    Double numerical integration: the range CDF of k standard normals,
    mixed over the scaled-chi distribution of the pooled-variance
    estimate.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if df <= 0:
        raise ValueError("df must be positive")
    if q <= 0:
        return 0.0
    # s = sqrt(chi2_df / df) concentrates near 1 with sd ~ 1/sqrt(2 df)
    if df < 8:
        lo, hi = 1e-9, 6.0
    else:
        spread = 14.0 / math.sqrt(2.0 * df)
        lo, hi = max(1e-9, 1.0 - spread), 1.0 + spread
    s, ws = _gauss_legendre(lo, hi, 160)
    log_g = (
        0.5 * df * math.log(df)
        - math.lgamma(df / 2.0)
        - (df / 2.0 - 1.0) * math.log(2.0)
        + (df - 1.0) * np.log(s)
        - 0.5 * df * s * s
    )
    g = np.exp(log_g)
    vals = np.array([_range_cdf_std(q * si, k) for si in s])
    return float(min(1.0, max(0.0, np.sum(ws * g * vals))))


def studentized_range_sf(q: float, k: int, df: float) -> float:
    return 1.0 - studentized_range_cdf(q, k, df)


def studentized_range_quantile(p: float, k: int, df: float) -> float:
    """Upper quantile: the q with P(Q <= q) = p (e.g. p = 0.95)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    lo, hi = 1e-6, 5.0
    while studentized_range_cdf(hi, k, df) < p:
        hi *= 2.0
        if hi > 1e4:
            raise RuntimeError("quantile bracket failed")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if studentized_range_cdf(mid, k, df) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# tests
# ---------------------------------------------------------------------------

def paired_t_test(a, b, nadeau_bengio: bool = False,
                  test_train_ratio: float = 1.0 / 9.0) -> TestResult:
    """Two-sided paired t-test on same-indexed measurements.

    ``nadeau_bengio`` inflates the variance by the test/train ratio to
    compensate for overlap between cross-validation training sets; the
    plain test is the default.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    df = float(n - 1)
    if sd == 0.0:
        stat = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        return TestResult(stat, (df,), math.nan, "paired-t")
    factor = 1.0 / n + (test_train_ratio if nadeau_bengio else 0.0)
    t = mean / (sd * math.sqrt(factor))
    return TestResult(t, (df,), student_t_two_sided_p(t, df), "paired-t")


def two_sample_t_test(x, y, pooled: bool = True) -> TestResult:
    """Two-sided two-sample t-test (pooled/Student by default, Welch otherwise)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = x.size, y.size
    if nx < 2 or ny < 2:
        raise ValueError("each sample needs at least two observations")
    mx, my = float(np.mean(x)), float(np.mean(y))
    vx, vy = float(np.var(x, ddof=1)), float(np.var(y, ddof=1))
    if vx == 0.0 and vy == 0.0:
        stat = 0.0 if mx == my else math.copysign(math.inf, mx - my)
        return TestResult(stat, (float(nx + ny - 2),), math.nan, "two-sample-t")
    if pooled:
        df = float(nx + ny - 2)
        sp2 = ((nx - 1) * vx + (ny - 1) * vy) / df
        se = math.sqrt(sp2 * (1.0 / nx + 1.0 / ny))
    else:
        se2x, se2y = vx / nx, vy / ny
        se = math.sqrt(se2x + se2y)
        df = (se2x + se2y) ** 2 / (
            se2x ** 2 / (nx - 1) + se2y ** 2 / (ny - 1)
        )
    t = (mx - my) / se
    return TestResult(t, (df,), student_t_two_sided_p(t, df), "two-sample-t")


def chi_square_2x2(counts, yates: bool = True) -> TestResult:
    """Chi-square independence test on a 2x2 table, df = 1.

    With ``yates`` the statistic is sum((|O-E| - 0.5)^2 / E); the 0.5 is
    subtracted unconditionally (textbook form, not floored at zero).
    """
    table = np.asarray(counts, dtype=np.float64)
    if table.shape != (2, 2):
        raise ValueError("counts must be a 2x2 table")
    if np.any(table < 0):
        raise ValueError("counts must be non-negative")
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    total = table.sum()
    if np.any(rows == 0) or np.any(cols == 0):
        raise ValueError("chi-square table has a zero marginal")
    expected = np.outer(rows, cols) / total
    c = 0.5 if yates else 0.0
    stat = float(np.sum((np.abs(table - expected) - c) ** 2 / expected))
    return TestResult(stat, (1.0,), chi2_sf(stat, 1.0), "chi-square")


def rm_anova(matrix) -> TestResult:
    """One-way repeated-measures ANOVA on a subjects x treatments matrix."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("matrix must be 2-D (subjects x treatments)")
    n, k = m.shape
    if n < 2 or k < 2:
        raise ValueError("need at least 2 subjects and 2 treatments")
    if np.any(~np.isfinite(m)):
        raise ValueError("matrix must be complete and finite")
    grand = m.mean()
    ss_treat = n * float(np.sum((m.mean(axis=0) - grand) ** 2))
    ss_subj = k * float(np.sum((m.mean(axis=1) - grand) ** 2))
    ss_total = float(np.sum((m - grand) ** 2))
    ss_err = ss_total - ss_treat - ss_subj
    df_treat = float(k - 1)
    df_err = float((k - 1) * (n - 1))
    ms_treat = ss_treat / df_treat
    ms_err = ss_err / df_err
    if ms_err <= 0.0:
        if ms_treat == 0.0:
            return TestResult(math.nan, (df_treat, df_err), math.nan, "rm-anova")
        return TestResult(math.inf, (df_treat, df_err), 0.0, "rm-anova")
    f = ms_treat / ms_err
    return TestResult(f, (df_treat, df_err), f_sf(f, df_treat, df_err), "rm-anova")


@dataclass(frozen=True)
class TukeyPair:
    pair: tuple[int, int]
    result: TestResult
    significant: bool


def tukey_hsd(matrix, alpha: float = 0.05) -> list[TukeyPair]:
    """All-pairs Tukey HSD over a subjects x treatments matrix.

    q = |mean_i - mean_j| / sqrt(MS_error / n) against the studentized
    range distribution with (k, df_error).
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("matrix must be 2-D (subjects x treatments)")
    n, k = m.shape
    if n < 2 or k < 2:
        raise ValueError("need at least 2 subjects and 2 treatments")
    anova = rm_anova(m)
    df_err = anova.df[1]
    ss_err = _rm_ss_error(m)
    ms_err = ss_err / df_err
    means = m.mean(axis=0)
    out = []
    for i in range(k):
        for j in range(i + 1, k):
            if ms_err <= 0.0:
                diff = abs(means[i] - means[j])
                stat = math.inf if diff > 0 else 0.0
                p = 0.0 if diff > 0 else math.nan
            else:
                stat = abs(means[i] - means[j]) / math.sqrt(ms_err / n)
                p = studentized_range_sf(stat, k, df_err)
            res = TestResult(stat, (float(k), df_err), p, "tukey-hsd")
            sig = (not math.isnan(p)) and p < alpha
            out.append(TukeyPair((i, j), res, sig))
    return out


def _rm_ss_error(m: np.ndarray) -> float:
    grand = m.mean()
    n, k = m.shape
    ss_treat = n * float(np.sum((m.mean(axis=0) - grand) ** 2))
    ss_subj = k * float(np.sum((m.mean(axis=1) - grand) ** 2))
    ss_total = float(np.sum((m - grand) ** 2))
    return ss_total - ss_treat - ss_subj
