"""L2-penalized logistic regression baseline.

Fitting maximizes the penalized log-likelihood (intercept unpenalized)
by iteratively reweighted least squares with step-halving, falling back
to a gradient step when the normal equations are singular.  There is no
random component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .ensembles import TrainedModel, _check_columns
from .preprocess import DesignMatrix


@dataclass(frozen=True)
class LogisticParams:
    l2_strength: float = 1.0
    max_iterations: int = 200
    convergence_tol: float = 1e-8

    def __post_init__(self):
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")


def _penalized_ll(eta, y, beta, lam):
    # log-likelihood sum(y*eta - log(1 + e^eta)) minus the ridge penalty
    ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    return ll - 0.5 * lam * float(np.sum(beta[1:] ** 2))


def fit_logistic(matrix: DesignMatrix, params: LogisticParams) -> TrainedModel:
    """Fit the baseline; ``extra["converged"]`` records whether the
    iteration cap was hit before the stopping rule held."""
    labels = matrix.labels
    if np.unique(labels).size < 2:
        raise ValueError("logistic regression: training data contains a single class")
    X = matrix.values
    y = labels.astype(np.float64)
    n, k = X.shape
    Z = np.hstack([np.ones((n, 1)), X])
    lam = params.l2_strength
    penalty_diag = np.full(k + 1, lam)
    penalty_diag[0] = 0.0

    beta = np.zeros(k + 1)
    eta = Z @ beta
    ll = _penalized_ll(eta, y, beta, lam)
    converged = False
    for _ in range(params.max_iterations):
        p = expit(eta)
        grad = Z.T @ (y - p) - penalty_diag * beta
        wdiag = np.maximum(p * (1.0 - p), 1e-12)
        hess = (Z * wdiag[:, None]).T @ Z + np.diag(penalty_diag)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad / float(np.max(wdiag) * n + lam + 1.0)

        # step-halving keeps the penalized log-likelihood non-decreasing
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            cand_eta = Z @ cand
            cand_ll = _penalized_ll(cand_eta, y, cand, lam)
            if cand_ll >= ll - 1e-14:
                break
            t *= 0.5
        else:
            break
        delta = float(np.max(np.abs(cand - beta)))
        beta, eta, ll = cand, cand_eta, cand_ll
        grad_inf = float(np.max(np.abs(Z.T @ (y - expit(eta)) - penalty_diag * beta)))
        if delta < params.convergence_tol and grad_inf < 10.0 * params.convergence_tol:
            converged = True
            break

    return TrainedModel(
        "lr",
        tuple(matrix.columns),
        coef=beta[1:].copy(),
        intercept=float(beta[0]),
        ledger=None,
        extra={"converged": converged, "penalized_ll": ll},
    )


def predict_proba_logistic(model: TrainedModel, matrix: DesignMatrix) -> np.ndarray:
    """sigmoid(intercept + w.x) per row, strictly inside (0, 1)."""
    if model.algorithm != "lr":
        raise ValueError("model is not a logistic regression")
    _check_columns(model, matrix)
    return expit(model.intercept + matrix.values @ model.coef)


def log_likelihood_gradient(model: TrainedModel, matrix: DesignMatrix,
                            l2_strength: float) -> np.ndarray:
    """Gradient of the penalized log-likelihood at the fitted coefficients."""
    X = matrix.values
    y = matrix.labels.astype(np.float64)
    n = X.shape[0]
    Z = np.hstack([np.ones((n, 1)), X])
    beta = np.concatenate([[model.intercept], model.coef])
    penalty = np.concatenate([[0.0], np.full(X.shape[1], l2_strength)])
    p = expit(Z @ beta)
    return Z.T @ (y - p) - penalty * beta
