"""Numerical core: OLS with rank checks, two-way within transformation via
alternating projections, heteroskedasticity- and cluster-robust covariance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import NonConvergence, RankDeficient, SingleCluster

#: Relative pivot threshold for rank detection.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class DesignMatrix:
    """Named regressor columns plus a response vector."""

    names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("design matrix and response are misaligned")
        if len(self.names) != X.shape[1]:
            raise ValueError("column names do not match design width")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("design contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class FitResult:
    """OLS fit: coefficients, residuals, degrees of freedom, covariance.

    ``vcov`` holds the classical homoskedastic covariance; robust variants
    come from :func:`hc1_vcov` and :func:`cluster_vcov`.  ``dof`` subtracts
    any absorbed fixed effects in addition to the explicit columns.
    """

    names: tuple[str, ...]
    coefficients: dict[str, float]
    residuals: np.ndarray
    dof: int
    vcov: np.ndarray
    xtx_inv: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return np.array([self.coefficients[n] for n in self.names])

    def se(self, vcov: np.ndarray | None = None) -> dict[str, float]:
        v = self.vcov if vcov is None else vcov
        return {n: float(np.sqrt(v[i, i])) for i, n in enumerate(self.names)}


# ---------------------------------------------------------------------------
# within transformation
# ---------------------------------------------------------------------------


def _group_codes(labels) -> tuple[np.ndarray, int]:
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    return codes.astype(np.intp), int(codes.max()) + 1


def demean_two_way(
    values: np.ndarray,
    unit_labels: Sequence,
    period_labels: Sequence,
    *,
    unit_trends: bool = False,
    tol: float = 1e-10,
    max_sweeps: int = 10_000,
) -> np.ndarray:
    """Residualize on unit and period effects by alternating projections.

    Accepts a vector or an (n, k) matrix of columns.  Sweeps alternate
    unit-mean and period-mean removal (plus per-unit linear trends when
    ``unit_trends``) until the largest absolute change falls below ``tol``.

    Raises
    ------
    NonConvergence
        When ``max_sweeps`` sweeps do not reach ``tol``.
    """
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be positive")
    x = np.array(values, dtype=np.float64, copy=True)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    ucodes, nu = _group_codes(unit_labels)
    pcodes, npd = _group_codes(period_labels)
    ucount = np.bincount(ucodes, minlength=nu).astype(np.float64)
    pcount = np.bincount(pcodes, minlength=npd).astype(np.float64)

    if unit_trends:
        tvals = np.asarray(period_labels, dtype=np.float64)
        tbar = np.bincount(ucodes, weights=tvals, minlength=nu) / ucount
        tcent = tvals - tbar[ucodes]
        tss = np.bincount(ucodes, weights=tcent * tcent, minlength=nu)
        tss_safe = np.where(tss > 0, tss, 1.0)

    change = np.inf
    for sweep in range(max_sweeps):
        change = 0.0
        for j in range(x.shape[1]):
            col = x[:, j]
            umean = np.bincount(ucodes, weights=col, minlength=nu) / ucount
            col -= umean[ucodes]
            pmean = np.bincount(pcodes, weights=col, minlength=npd) / pcount
            col -= pmean[pcodes]
            delta = np.abs(umean).max() + np.abs(pmean).max()
            if unit_trends:
                slope = np.bincount(ucodes, weights=col * tcent, minlength=nu) / tss_safe
                col -= slope[ucodes] * tcent
                delta += np.abs(slope).max()
            change = max(change, float(delta))
        if change < tol:
            break
    else:
        raise NonConvergence(change, max_sweeps)
    return x[:, 0] if squeeze else x


# ---------------------------------------------------------------------------
# ordinary least squares
# ---------------------------------------------------------------------------


def ols(design: DesignMatrix, *, absorbed_dof: int = 0) -> FitResult:
    """Least-squares fit with pivoted-QR rank detection.

    ``absorbed_dof`` counts fixed effects removed by a prior within
    transformation; it reduces the residual degrees of freedom exactly as
    the equivalent dummy-variable regression would.

    Raises
    ------
    RankDeficient
        Naming the dependent column set when pivots collapse.
    """
    X, y = design.X, design.y
    n, k = X.shape
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    top = diag.max() if diag.size else 0.0
    rank = int(np.sum(diag > RANK_RTOL * top)) if top > 0 else 0
    if rank < k:
        raise RankDeficient([design.names[i] for i in piv[rank:]])

    qty = Q.T @ y
    beta_piv = scipy.linalg.solve_triangular(R, qty)
    beta = np.empty(k)
    beta[piv] = beta_piv
    residuals = y - X @ beta

    dof = n - k - absorbed_dof
    rinv = scipy.linalg.solve_triangular(R, np.eye(k))
    xtx_inv_piv = rinv @ rinv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = xtx_inv_piv
    # dof can hit zero on exactly-identified designs; the point estimate
    # stands but every variance is undefined
    sigma2 = float(residuals @ residuals) / dof if dof > 0 else np.nan
    vcov = sigma2 * xtx_inv
    coefficients = {name: float(b) for name, b in zip(design.names, beta)}
    return FitResult(design.names, coefficients, residuals, dof, vcov, xtx_inv)


def hc1_vcov(fit: FitResult, design: DesignMatrix) -> np.ndarray:
    """Heteroskedasticity-robust sandwich with the n/(n-k) correction.

    k counts absorbed fixed effects too, matching dummy-variable OLS.
    """
    X, e = design.X, fit.residuals
    if fit.dof <= 0:
        return np.full((design.k, design.k), np.nan)
    meat = (X * (e * e)[:, None]).T @ X
    v = fit.xtx_inv @ meat @ fit.xtx_inv
    return v * (design.n / fit.dof)


def cluster_vcov(fit: FitResult, design: DesignMatrix, cluster_labels) -> np.ndarray:
    """Cluster-robust sandwich with G/(G-1) x (n-1)/(n-k) correction."""
    codes, g = _group_codes(cluster_labels)
    if g < 2:
        raise SingleCluster("cluster-robust covariance requires at least two clusters")
    if fit.dof <= 0:
        return np.full((design.k, design.k), np.nan)
    X, e = design.X, fit.residuals
    n, k = design.n, design.k
    scores = np.zeros((g, k))
    np.add.at(scores, codes, X * e[:, None])
    meat = scores.T @ scores
    corr = (g / (g - 1.0)) * ((n - 1.0) / fit.dof)
    return corr * (fit.xtx_inv @ meat @ fit.xtx_inv)
