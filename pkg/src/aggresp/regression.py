"""Least squares, quasi-Poisson and regression with ARMA errors.

The ARMA-error model is fitted by exact maximum likelihood with the
regression coefficients profiled out: for a candidate (phi, theta) the
response and every design column are pushed through the same Kalman filter,
and generalized least squares on the standardized innovations gives beta
and sigma^2 in closed form.  Only (phi, theta) are searched numerically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.special import xlogy

from . import arma as _arma
from .arma import ArmaOrder, ArmaParams, OrderSearch
from .basis import DesignMatrix
from .errors import ConfigError, DataError, NumericalError, RankDeficientError
from .series import DailySeries, as_array, longest_run

logger = logging.getLogger(__name__)


def _full(n: int, rows, values) -> np.ndarray:
    out = np.full(n, np.nan)
    out[rows] = values
    return out


def _ls_solve(A: np.ndarray, b: np.ndarray, names) -> tuple[np.ndarray, np.ndarray]:
    """Least squares via column-pivoted QR; returns ``(beta, R_inverse)``.

    ``R_inverse`` is ordered like the columns of ``A`` so that
    ``R_inverse @ R_inverse.T`` is ``(A'A)^-1``.
    """
    n, k = A.shape
    if n < k:
        raise DataError(f"{n} usable rows for {k} columns")
    Q, R, piv = linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, k) * np.finfo(float).eps * (diag[0] if k else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < k:
        raise RankDeficientError(names[_first_dependent(A, tol)])
    coef = linalg.solve_triangular(R, Q.T @ b)
    beta = np.empty(k)
    beta[piv] = coef
    r_inv = linalg.solve_triangular(R, np.eye(k))
    r_inv_ordered = np.empty_like(r_inv)
    r_inv_ordered[piv] = r_inv
    return beta, r_inv_ordered


def _first_dependent(A: np.ndarray, tol: float) -> int:
    """Index of the first column that lies in the span of the columns before it."""
    for j in range(A.shape[1]):
        d = np.abs(np.diag(linalg.qr(A[:, : j + 1], mode="r")[0]))
        if d.min() <= tol:
            return j
    return A.shape[1] - 1


def _complete_rows(X: DesignMatrix, y: np.ndarray) -> np.ndarray:
    if X.shape[0] != y.size:
        raise DataError(f"design has {X.shape[0]} rows, response has {y.size}")
    return X.row_valid & ~np.isnan(y)


class OlsFit(NamedTuple):
    beta: np.ndarray
    residuals: DailySeries


def ols_fit(X: DesignMatrix, y) -> OlsFit:
    """Complete-case least squares; residuals are missing outside the fitted rows."""
    yv = as_array(y)
    ok = _complete_rows(X, yv)
    beta, _ = _ls_solve(X.values[ok], yv[ok], X.names)
    resid = _full(yv.size, ok, yv[ok] - X.values[ok] @ beta)
    start = y.start_date if isinstance(y, DailySeries) else "2000-01-01"
    return OlsFit(beta, DailySeries.from_values(resid, start))


# -- quasi-Poisson ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GlmFit:
    beta: np.ndarray
    dispersion: float
    deviance: float
    fitted: DailySeries
    beta_cov: np.ndarray
    converged: bool
    n_iter: int
    names: tuple[str, ...] = ()


def poisson_deviance(y, mu) -> float:
    return float(2.0 * np.sum(xlogy(y, y / mu) - (y - mu)))


def quasipoisson_fit(X: DesignMatrix, y, offset=None, max_iter: int = 50,
                     tol: float = 1e-8) -> GlmFit:
    """Log-link Poisson IRLS; dispersion is Pearson chi-square over ``n - k``."""
    yv = as_array(y)
    ok = _complete_rows(X, yv)
    off = np.zeros(yv.size) if offset is None else np.asarray(offset, dtype=float)
    ok &= ~np.isnan(off)
    yo, Xo, oo = yv[ok], X.values[ok], off[ok]
    if np.any(yo < 0):
        raise DataError("quasi-Poisson response has negative counts")
    if np.any(yo != np.round(yo)):
        raise DataError("quasi-Poisson response must be integer counts")
    n, k = Xo.shape

    mu = yo + 0.1
    eta = np.log(mu)
    dev_old = math.inf
    converged = False
    beta = np.zeros(k)
    r_inv = np.eye(k)
    it = 0
    for it in range(1, max_iter + 1):
        z = eta - oo + (yo - mu) / mu
        sw = np.sqrt(mu)
        beta, r_inv = _ls_solve(Xo * sw[:, None], z * sw, X.names)
        eta = Xo @ beta + oo
        mu = np.exp(eta)
        dev = poisson_deviance(yo, mu)
        if abs(dev - dev_old) / (abs(dev) + 0.1) < tol:
            converged = True
            break
        dev_old = dev
    if not converged:
        logger.warning("quasi-Poisson IRLS did not converge in %d iterations", max_iter)

    # covariance at the final weights
    _, r_inv = _ls_solve(Xo * np.sqrt(mu)[:, None], np.zeros(n), X.names)
    pearson = float(np.sum((yo - mu) ** 2 / mu))
    dispersion = pearson / (n - k) if n > k else math.nan
    start = y.start_date if isinstance(y, DailySeries) else "2000-01-01"
    return GlmFit(
        beta=beta,
        dispersion=dispersion,
        deviance=poisson_deviance(yo, mu),
        fitted=DailySeries.from_values(_full(yv.size, ok, mu), start),
        beta_cov=dispersion * (r_inv @ r_inv.T),
        converged=converged,
        n_iter=it,
        names=X.names,
    )


# -- regression with ARMA errors --------------------------------------------------

@dataclass(frozen=True, eq=False)
class RegArmaFit:
    beta: np.ndarray
    arma: ArmaParams
    order: ArmaOrder
    loglik: float
    aic: float
    residuals: DailySeries
    innovations: DailySeries
    beta_cov: np.ndarray
    names: tuple[str, ...] = ()
    rows: tuple[int, int] = (0, 0)
    dropped_rows: int = 0
    converged: bool = True
    search: OrderSearch | None = field(default=None, repr=False)

    @property
    def n_params(self) -> int:
        return self.order.n_params + self.beta.size

    @property
    def n_obs(self) -> int:
        return self.rows[1] - self.rows[0]

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.beta_cov))


class GlsProfile(NamedTuple):
    beta: np.ndarray
    sigma2: float
    loglik: float
    r_inv: np.ndarray
    innovations: np.ndarray
    variances: np.ndarray


def gls_profile(X: np.ndarray, y: np.ndarray, phi, theta, names=None) -> GlsProfile:
    """Exact-likelihood GLS for fixed ARMA coefficients on a contiguous block."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = names or tuple(f"x{i}" for i in range(X.shape[1]))
    V, F = _arma.innovations(np.column_stack([y, X]), phi, theta)
    if not np.all(F > 0):
        raise NumericalError("non-positive prediction variance in the Kalman filter")
    s = 1.0 / np.sqrt(F)
    beta, r_inv = _ls_solve(V[:, 1:] * s[:, None], V[:, 0] * s, names)
    v = V[:, 0] - V[:, 1:] @ beta
    ll, s2 = _arma.concentrated_loglik(v, F)
    return GlsProfile(beta, s2, ll, r_inv, v, F)


def _profile_loglik(Vs: np.ndarray, F: np.ndarray) -> float:
    """Concentrated log-likelihood from standardized innovations (normal equations)."""
    A, b = Vs[:, 1:], Vs[:, 0]
    try:
        cf = linalg.cho_factor(A.T @ A)
        beta = linalg.cho_solve(cf, A.T @ b)
    except linalg.LinAlgError:
        beta, *_ = np.linalg.lstsq(A, b, rcond=None)
    r = b - A @ beta
    n = b.size
    s2 = max(float(r @ r) / n, np.finfo(float).tiny)
    return -0.5 * n * (_arma.LOG_2PI + math.log(s2) + 1.0) - 0.5 * float(np.sum(np.log(F)))


def _fit_block(X: DesignMatrix, yv: np.ndarray):
    ok = _complete_rows(X, yv)
    if not ok.any():
        raise DataError("no complete rows to fit")
    start, stop = longest_run(ok)
    dropped = int(ok.sum()) - (stop - start)
    return start, stop, dropped


def fit_reg_arma(X: DesignMatrix, y_agg, order: ArmaOrder,
                 max_evals: int = _arma.MAX_EVALS) -> RegArmaFit:
    """Regression with ARMA(p, q) errors by exact maximum likelihood.

    Uses the longest contiguous block of complete rows.
    """
    yv = as_array(y_agg)
    start, stop, dropped = _fit_block(X, yv)
    k = X.shape[1]
    need = 10 * (order.n_params + k)
    if stop - start < need:
        raise DataError(
            f"longest contiguous block has {stop - start} rows; ARMA{order} with {k} "
            f"regressors needs {need}"
        )
    Xr, yr = X.values[start:stop], yv[start:stop]
    converged = True

    if order.p + order.q > 0:
        def objective(phi, theta):
            V, F = _arma.innovations(np.column_stack([yr, Xr]), phi, theta)
            if not np.all(F > 0):
                return -math.inf
            return _profile_loglik(V / np.sqrt(F)[:, None], F)

        ols_beta, _ = _ls_solve(Xr, yr, X.names)
        starts = [_arma.starting_values(yr - Xr @ ols_beta, order),
                  (np.zeros(order.p), np.zeros(order.q))]
        x, _, converged, _ = _arma.maximize(objective, order, starts, max_evals)
        phi, theta = _arma._unpack(x, order.p)
    else:
        phi, theta = np.zeros(0), np.zeros(0)

    prof = gls_profile(Xr, yr, phi, theta, X.names)
    params = ArmaParams(phi, theta, prof.sigma2)
    if order.p + order.q > 0 and not _arma.check_admissible(params):
        raise NumericalError(f"no admissible ARMA{order} parameters found")
    n = yv.size
    rows = np.arange(start, stop)
    resid = yr - Xr @ prof.beta
    sd = y_agg.start_date if isinstance(y_agg, DailySeries) else "2000-01-01"
    return RegArmaFit(
        beta=prof.beta,
        arma=params,
        order=order,
        loglik=prof.loglik,
        aic=_arma.aic(prof.loglik, order.n_params + k),
        residuals=DailySeries.from_values(_full(n, rows, resid), sd),
        innovations=DailySeries.from_values(_full(n, rows, prof.innovations), sd),
        beta_cov=prof.sigma2 * (prof.r_inv @ prof.r_inv.T),
        names=X.names,
        rows=(start, stop),
        dropped_rows=dropped,
        converged=converged,
    )


def two_stage_fit(X: DesignMatrix, y_agg, max_p: int = 5, max_q: int = 5, ic: str = "aic",
                  min_root: float = 1.0) -> RegArmaFit:
    """OLS residuals, stepwise order selection on them, then the joint ML fit."""
    yv = as_array(y_agg)
    start, stop, _ = _fit_block(X, yv)
    Xr, yr = X.values[start:stop], yv[start:stop]
    beta, _ = _ls_solve(Xr, yr, X.names)
    resid = yr - Xr @ beta
    if max_p == 0 and max_q == 0:
        search = OrderSearch(ArmaOrder(0, 0), math.nan)
    else:
        search = _arma.stepwise_search(resid, max_p, max_q, ic, min_root=min_root)
    fit = fit_reg_arma(X, y_agg, search.order)
    object.__setattr__(fit, "search", search)
    return fit


def fitted_values(fit: RegArmaFit, X: DesignMatrix, mode: str = "mean_only") -> DailySeries:
    """``X beta`` alone, or plus the ARMA one-step prediction of the residual.

    ``one_step`` is only defined on the rows the fit used; other rows are
    missing.
    """
    if X.shape[1] != fit.beta.size:
        raise ConfigError(f"design has {X.shape[1]} columns, fit has {fit.beta.size}")
    mean = X.values @ fit.beta
    mean[~X.row_valid] = np.nan
    sd = fit.residuals.start_date
    if mode == "mean_only":
        return DailySeries.from_values(mean, sd)
    if mode != "one_step":
        raise ConfigError(f"unknown fitted-value mode {mode!r}")
    if X.shape[0] != len(fit.residuals):
        raise ConfigError("one_step fitted values need the design the model was fitted on")
    start, stop = fit.rows
    eps = fit.residuals.values[start:stop]
    v, _ = _arma.innovations(eps, fit.arma.phi, fit.arma.theta)
    out = np.full(mean.size, np.nan)
    out[start:stop] = mean[start:stop] + (eps - v)
    return DailySeries.from_values(out, sd)
