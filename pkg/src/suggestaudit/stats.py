"""Student-t tail probabilities and ordinary least squares with inference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import RankDeficiencyError


def _check_dof(dof):
    if not dof >= 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")


def two_sided_p(t: float, dof: float) -> float:
    """P(|T| >= |t|), computed directly from the incomplete beta tail."""
    _check_dof(dof)
    if np.isnan(t):
        return float("nan")
    if np.isinf(t):
        return 0.0
    return float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))


def t_cdf(t: float, dof: float) -> float:
    """Student-t CDF via the regularized incomplete beta function."""
    tail = 0.5 * two_sided_p(t, dof)
    return 1.0 - tail if t > 0 else tail


@dataclass(frozen=True)
class RegressionResult:
    dependent: str
    predictor: str
    beta: float
    intercept: float
    stderr: float
    t_stat: float
    p_value: float
    r_squared: float
    n: int
    dof: int


class OLSRegression(RegressorMixin, BaseEstimator):
    """Least squares with an intercept, coefficient standard errors and t-tests.

    Fitted through a QR decomposition of the design matrix. A column whose
    R diagonal collapses relative to the largest one is reported as
    linearly dependent on the columns before it.
    """

    def __init__(self, fit_intercept: bool = True, rank_tol: float = 1e-10):
        self.fit_intercept = fit_intercept
        self.rank_tol = rank_tol

    def fit(self, X, y, feature_names: Sequence[str] | None = None):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        n, p = X.shape
        if feature_names is None:
            feature_names = getattr(self, "feature_names_in_", None)
        names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(p)]
        A = np.column_stack([np.ones(n), X]) if self.fit_intercept else X
        cols = (["intercept"] if self.fit_intercept else []) + names
        m = A.shape[1]
        if n <= m:
            raise ValueError(f"need more observations ({n}) than parameters ({m})")
        Q, R = np.linalg.qr(A)
        diag = np.abs(np.diag(R))
        scale = np.linalg.norm(A, axis=0)
        bad = [cols[j] for j in range(m) if diag[j] <= self.rank_tol * max(scale[j], 1e-300)]
        if bad:
            raise RankDeficiencyError(f"design matrix is rank deficient; dependent columns: {bad}", bad)
        beta = np.linalg.solve(R, Q.T @ y)
        resid = y - A @ beta
        ssr = float(resid @ resid)
        sst = float(((y - y.mean()) ** 2).sum()) if self.fit_intercept else float(y @ y)
        dof = n - m
        Rinv = np.linalg.solve(R, np.eye(m))
        cov_unscaled = Rinv @ Rinv.T
        if sst == 0.0 or (self.fit_intercept and np.ptp(y) == 0.0):
            # constant response: every slope is exactly zero (sst may carry rounding noise)
            beta[int(self.fit_intercept):] = 0.0
            stderr = np.zeros(m)
            tvals = np.zeros(m)
            r2 = 0.0
        else:
            sigma2 = ssr / dof
            stderr = np.sqrt(sigma2 * np.diag(cov_unscaled))
            with np.errstate(divide="ignore", invalid="ignore"):
                tvals = np.where(stderr > 0, beta / np.where(stderr > 0, stderr, 1.0),
                                 np.sign(beta) * np.inf)
            r2 = 1.0 - ssr / sst
        pvals = np.array([1.0 if t == 0 else two_sided_p(t, dof) for t in tvals])
        off = int(self.fit_intercept)
        self.intercept_ = float(beta[0]) if self.fit_intercept else 0.0
        self.coef_ = beta[off:]
        self.params_ = beta
        self.bse_ = stderr
        self.tvalues_ = tvals
        self.pvalues_ = pvals
        self.rsquared_ = float(min(max(r2, 0.0), 1.0))
        self.ssr_ = ssr
        self.dof_ = dof
        self.nobs_ = n
        self.param_names_ = cols
        self.n_features_in_ = p
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

    def results(self, dependent: str = "y") -> list[RegressionResult]:
        """One result per slope coefficient (the intercept is carried along)."""
        check_is_fitted(self, "coef_")
        off = int(self.fit_intercept)
        return [
            RegressionResult(dependent, self.param_names_[j], float(self.params_[j]), self.intercept_,
                             float(self.bse_[j]), float(self.tvalues_[j]), float(self.pvalues_[j]),
                             self.rsquared_, self.nobs_, self.dof_)
            for j in range(off, len(self.params_))
        ]


def ols(X, y, names: Sequence[str] | None = None, dependent: str = "y") -> list[RegressionResult]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return OLSRegression().fit(X, y, feature_names=names).results(dependent)
