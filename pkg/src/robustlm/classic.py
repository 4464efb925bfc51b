"""Least-squares fit and the frequentist covariance estimators.

* model-based: ``RSS / (n - m) * (X'X)^-1``
* HC0 sandwich: ``(X'X)^-1 X' diag(e_i^2) X (X'X)^-1`` with raw OLS residuals
* fixed-design grouped sandwich: the same sandwich with each observation's
  squared residual replaced by its group's within-group sum of squares
  divided by ``n_k - 3``

All solves go through a QR factorisation of X; no explicit inverse of X'X is
formed from the normal equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .dataset import DEFAULT_COND_LIMIT, Dataset, check_rank
from .errors import DataError, InsufficientReplicationError, NumericalError

Z95 = 1.96

MODEL_BASED = "model-based"
SANDWICH = "sandwich"
SANDWICH_FIXED = "sandwich-fixed-groups"


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    method: str


def _qr(X: np.ndarray, names=None, cond_limit: float = DEFAULT_COND_LIMIT):
    check_rank(X, names, cond_limit)
    q, r = np.linalg.qr(X, mode="reduced")
    return q, r


def _bread(r: np.ndarray) -> np.ndarray:
    """(X'X)^-1 = R^-1 R^-T from the triangular factor."""
    rinv = solve_triangular(r, np.eye(r.shape[0]))
    return rinv @ rinv.T


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def fit_ols(data: Dataset, cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    q, r = _qr(data.X, data.column_names, cond_limit)
    return solve_triangular(r, q.T @ data.Y)


def residuals(data: Dataset, beta: np.ndarray) -> np.ndarray:
    return data.Y - data.X @ beta


def cov_model_based(data: Dataset, beta, cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    n, m = data.X.shape
    if n <= m:
        raise DataError(f"no residual degrees of freedom (n={n}, m={m})")
    _, r = _qr(data.X, data.column_names, cond_limit)
    e = residuals(data, np.asarray(beta, dtype=float))
    sigma2 = float(e @ e) / (n - m)
    return _symmetrize(sigma2 * _bread(r))


def _sandwich(X: np.ndarray, row_weights: np.ndarray, names, cond_limit) -> np.ndarray:
    _, r = _qr(X, names, cond_limit)
    bread = _bread(r)
    meat = (X * row_weights[:, None]).T @ X
    return _symmetrize(bread @ meat @ bread)


def cov_sandwich_hc0(data: Dataset, beta, cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    e = residuals(data, np.asarray(beta, dtype=float))
    return _sandwich(data.X, e * e, data.column_names, cond_limit)


def cov_sandwich_fixed_groups(grouped, cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    """Grouped-residual sandwich evaluated row by row on the expanded design.

    ``grouped`` is a :class:`robustlm.discrete.GroupedData`; every group needs
    at least four observations.
    """
    small = np.flatnonzero(grouped.counts < 4)
    if small.size:
        raise InsufficientReplicationError(
            f"groups {small.tolist()} have fewer than 4 observations "
            f"(counts {grouped.counts[small].tolist()})",
            small.tolist(),
        )
    X = grouped.xi[grouped.row_index]
    per_group = grouped.group_ss / (grouped.counts - 3.0)
    return _sandwich(X, per_group[grouped.row_index], grouped.column_names, cond_limit)


def ci95(beta, cov) -> tuple[np.ndarray, np.ndarray]:
    """``beta +/- 1.96 * sqrt(diag(cov))``; tiny negative variances are clamped to zero."""
    beta = np.asarray(beta, dtype=float)
    se = standard_errors(cov)
    return beta - Z95 * se, beta + Z95 * se


def standard_errors(cov) -> np.ndarray:
    var = np.diag(np.atleast_2d(np.asarray(cov, dtype=float))).copy()
    if np.any(var < -1e-12):
        raise NumericalError(f"covariance has negative diagonal entries: {var[var < 0]}")
    return np.sqrt(np.clip(var, 0.0, None))


def fit_classic(data: Dataset, method: str, cond_limit: float = DEFAULT_COND_LIMIT) -> FitResult:
    """OLS coefficients with the ``model-based`` or ``sandwich`` (HC0) covariance."""
    beta = fit_ols(data, cond_limit)
    if method == MODEL_BASED:
        cov = cov_model_based(data, beta, cond_limit)
    elif method == SANDWICH:
        cov = cov_sandwich_hc0(data, beta, cond_limit)
    else:
        raise ValueError(f"unknown classical method {method!r}")
    se = standard_errors(cov)
    low, high = ci95(beta, cov)
    return FitResult(beta, cov, se, low, high, method)
