"""ARMA(p, q) models for regression residuals.

Sign convention::

    eps[t] = e[t] + sum_k phi[k] eps[t-k] + sum_l theta[l] e[t-l]

The likelihood is the exact Gaussian one, computed by the prediction-error
decomposition of a Kalman filter started from the stationary state
covariance.  Estimation maximizes the likelihood with sigma^2 concentrated
out, searching over partial autocorrelations of the AR and MA polynomials so
that every proposal is stationary and invertible.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg, optimize, signal

from ._kalman import filter_innovations
from .errors import ConfigError, DataError, NumericalError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
PACF_BOUND = 0.9999
MAX_EVALS = 500
REL_TOL = 1e-8


@dataclass(frozen=True)
class ArmaOrder:
    p: int = 0
    q: int = 0

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ConfigError(f"ARMA orders must be non-negative, got ({self.p}, {self.q})")

    @property
    def n_params(self) -> int:
        """AR + MA coefficients + innovation variance."""
        return self.p + self.q + 1

    def __iter__(self):
        return iter((self.p, self.q))

    def __str__(self):
        return f"({self.p},{self.q})"


@dataclass(frozen=True)
class ArmaParams:
    phi: tuple[float, ...] = ()
    theta: tuple[float, ...] = ()
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in np.atleast_1d(self.phi)))
        object.__setattr__(self, "theta", tuple(float(v) for v in np.atleast_1d(self.theta)))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not self.sigma2 >= 0:
            raise ConfigError(f"innovation variance must be >= 0, got {self.sigma2}")

    @property
    def order(self) -> ArmaOrder:
        return ArmaOrder(len(self.phi), len(self.theta))


def _poly_roots_outside(coefs, sign: float) -> bool:
    c = np.asarray(coefs, dtype=float)
    if not np.all(np.isfinite(c)):
        return False
    c = np.trim_zeros(c, "b")
    if c.size == 0:
        return True
    # 1 + sign * sum c_k z^k, highest power first
    poly = np.concatenate([sign * c[::-1], [1.0]])
    return bool(np.all(np.abs(np.roots(poly)) > 1.0))


def _min_modulus(coefs, sign: float) -> float:
    c = np.trim_zeros(np.asarray(coefs, dtype=float), "b")
    if c.size == 0:
        return math.inf
    poly = np.concatenate([sign * c[::-1], [1.0]])
    return float(np.min(np.abs(np.roots(poly))))


def min_root_modulus(params: ArmaParams) -> float:
    """Smallest root modulus over the AR and MA polynomials (inf for white noise)."""
    return min(_min_modulus(params.phi, -1.0), _min_modulus(params.theta, 1.0))


def check_admissible(params: ArmaParams) -> bool:
    """Stationary AR part and invertible MA part."""
    return _poly_roots_outside(params.phi, -1.0) and _poly_roots_outside(params.theta, 1.0)


def _psi_weights(phi, theta, n: int) -> np.ndarray:
    psi = np.zeros(n)
    if n == 0:
        return psi
    psi[0] = 1.0
    for j in range(1, n):
        v = theta[j - 1] if j <= len(theta) else 0.0
        for i in range(1, min(j, len(phi)) + 1):
            v += phi[i - 1] * psi[j - i]
        psi[j] = v
    return psi


def autocovariance(params: ArmaParams, max_lag: int) -> np.ndarray:
    """Theoretical autocovariances ``gamma(0..max_lag)`` (extended Yule-Walker)."""
    if not check_admissible(params):
        raise ConfigError("autocovariance requires stationary, invertible parameters")
    phi, theta, s2 = params.phi, params.theta, params.sigma2
    p, q = len(phi), len(theta)
    m = max(p, q)
    psi = _psi_weights(phi, theta, q + 1)
    th = (1.0,) + theta
    A = np.eye(m + 1)
    b = np.zeros(m + 1)
    for k in range(m + 1):
        for j in range(1, p + 1):
            A[k, abs(k - j)] -= phi[j - 1]
        b[k] = s2 * sum(th[j] * psi[j - k] for j in range(k, q + 1))
    head = np.linalg.solve(A, b)
    gamma = np.zeros(max(max_lag, m) + 1)
    gamma[: m + 1] = head
    for k in range(m + 1, gamma.size):
        gamma[k] = sum(phi[j - 1] * gamma[k - j] for j in range(1, p + 1))
    return gamma[: max_lag + 1]


def state_space(phi, theta):
    """Companion-form AR column, disturbance loading and stationary covariance."""
    p, q = len(phi), len(theta)
    r = max(p, q + 1)
    phi_pad = np.zeros(r)
    phi_pad[:p] = phi
    rvec = np.zeros(r)
    rvec[0] = 1.0
    rvec[1:q + 1] = theta
    T = np.zeros((r, r))
    T[:, 0] = phi_pad
    T[np.arange(r - 1), np.arange(1, r)] = 1.0
    with warnings.catch_warnings():
        # near the stationarity boundary the solve is ill-conditioned but still usable
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        P0 = linalg.solve_discrete_lyapunov(T, np.outer(rvec, rvec))
    P0 = 0.5 * (P0 + P0.T)
    return phi_pad, rvec, P0


def innovations(Y, phi, theta):
    """Kalman innovations of the columns of ``Y`` under unit innovation variance."""
    Y = np.asarray(Y, dtype=float)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    if len(phi) == 0 and len(theta) == 0:
        V, F = Y.copy(), np.ones(Y.shape[0])
    else:
        phi_pad, rvec, P0 = state_space(phi, theta)
        V, F = filter_innovations(np.ascontiguousarray(Y), phi_pad, rvec, P0)
    return (V[:, 0] if squeeze else V), F


def arma_loglik(series, order: ArmaOrder, params: ArmaParams) -> float:
    """Exact Gaussian log-likelihood of a zero-mean stationary ARMA process.

    Returns ``-inf`` for non-admissible parameters (optimizers use it as a
    penalty) instead of raising.
    """
    y = np.asarray(series, dtype=float)
    if params.order != order:
        raise ConfigError(f"params have order {params.order}, expected {order}")
    if np.isnan(y).any():
        raise DataError("arma_loglik needs a fully observed series")
    if params.sigma2 <= 0 or not check_admissible(params):
        return -math.inf
    v, F = innovations(y, params.phi, params.theta)
    if not np.all(F > 0):
        return -math.inf
    s2 = params.sigma2
    return float(-0.5 * (y.size * LOG_2PI + np.sum(np.log(s2 * F)) + np.sum(v * v / F) / s2))


def concentrated_loglik(v: np.ndarray, F: np.ndarray):
    """Log-likelihood with sigma^2 at its maximizer; returns ``(loglik, sigma2)``."""
    n = v.size
    if not np.all(F > 0):
        return -math.inf, math.nan
    s2 = max(float(np.sum(v * v / F)) / n, np.finfo(float).tiny)
    return -0.5 * n * (LOG_2PI + math.log(s2) + 1.0) - 0.5 * float(np.sum(np.log(F))), s2


# -- partial autocorrelation parameterization ---------------------------------

def pacf_to_coef(r) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations to AR coefficients."""
    r = np.asarray(r, dtype=float)
    a = np.zeros(0)
    for k, rk in enumerate(r):
        a = np.concatenate([a - rk * a[::-1], [rk]]) if k else np.array([rk])
    return a


def coef_to_pacf(a) -> np.ndarray | None:
    """Inverse of :func:`pacf_to_coef`; ``None`` when the polynomial is not stationary."""
    a = np.asarray(a, dtype=float).copy()
    p = a.size
    r = np.zeros(p)
    for k in range(p, 0, -1):
        rk = a[k - 1]
        if not abs(rk) < 1.0:
            return None
        r[k - 1] = rk
        if k > 1:
            head = a[: k - 1]
            a = (head + rk * head[::-1]) / (1.0 - rk * rk)
    return r


def _unpack(x, p: int):
    phi = pacf_to_coef(x[:p])
    theta = -pacf_to_coef(x[p:])
    return phi, theta


def _pack(phi, theta) -> np.ndarray | None:
    rp = coef_to_pacf(phi)
    rq = coef_to_pacf(-np.asarray(theta, dtype=float))
    if rp is None or rq is None:
        return None
    x = np.concatenate([rp, rq])
    return np.clip(x, -PACF_BOUND, PACF_BOUND)


def _yule_walker(y, p: int) -> np.ndarray:
    if p == 0:
        return np.zeros(0)
    n = y.size
    acov = np.array([y[: n - k] @ y[k:] for k in range(p + 1)]) / n
    if acov[0] <= 0:
        return np.zeros(p)
    return linalg.solve_toeplitz(acov[:p], acov[1:])


def starting_values(y, order: ArmaOrder):
    """Moment-based start: Yule-Walker for pure AR, Hannan-Rissanen otherwise."""
    y = np.asarray(y, dtype=float)
    p, q = order.p, order.q
    if q == 0:
        return _yule_walker(y, p), np.zeros(0)
    n = y.size
    m = int(min(max(p + q, round(math.log(n) ** 2)), max(p + q, n // 10)))
    a = _yule_walker(y, m)
    resid = signal.lfilter(np.concatenate([[1.0], -a]), [1.0], y)
    start = max(p, q, m)
    if n - start <= p + q + 1:
        return np.zeros(p), np.zeros(q)
    cols = [y[start - k: n - k] for k in range(1, p + 1)]
    cols += [resid[start - k: n - k] for k in range(1, q + 1)]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), y[start:], rcond=None)
    return coef[:p], coef[p:]


class ArmaFit(NamedTuple):
    params: ArmaParams
    loglik: float
    converged: bool
    n_evals: int


def maximize(objective, order: ArmaOrder, start, max_evals: int = MAX_EVALS, tol: float = REL_TOL):
    """Maximize ``objective(phi, theta) -> loglik`` over admissible parameters.

    ``start`` is a list of candidate ``(phi, theta)`` starting points; the
    best-scoring admissible one seeds a bounded quasi-Newton search over
    partial autocorrelations.  Returns ``(x_best, loglik, converged, n_evals)``.
    """
    p, q = order.p, order.q
    n_evals = 0

    def negll(x):
        nonlocal n_evals
        n_evals += 1
        phi, theta = _unpack(x, p)
        val = objective(phi, theta)
        return -val if np.isfinite(val) else 1e300

    best_x, best_f = None, math.inf
    for phi0, theta0 in start:
        x0 = _pack(phi0, theta0)
        if x0 is None:
            continue
        f0 = negll(x0)
        if f0 < best_f:
            best_x, best_f = x0, f0
    if best_x is None:
        best_x = np.zeros(p + q)
        best_f = negll(best_x)
    if p + q == 0:
        return best_x, -best_f, True, n_evals

    res = optimize.minimize(
        negll, best_x, method="L-BFGS-B",
        bounds=[(-PACF_BOUND, PACF_BOUND)] * (p + q),
        options={"maxfun": max(max_evals - n_evals, 10), "ftol": tol, "maxls": 30},
    )
    x, f = (res.x, res.fun) if res.fun <= best_f else (best_x, best_f)
    if f >= 1e300:
        raise NumericalError(f"no admissible ARMA{order} parameters found")
    return x, -f, bool(res.success), n_evals


def fit_arma(series, order: ArmaOrder, max_evals: int = MAX_EVALS) -> ArmaFit:
    """Exact maximum-likelihood ARMA fit of a zero-mean series."""
    y = np.asarray(series, dtype=float)
    if np.isnan(y).any():
        raise DataError("fit_arma needs a fully observed series")
    if y.size < 10 * order.n_params:
        raise DataError(
            f"series of length {y.size} is too short for ARMA{order} (need {10 * order.n_params})"
        )
    if order.p + order.q == 0:
        v, F = y, np.ones(y.size)
        ll, s2 = concentrated_loglik(v, F)
        return ArmaFit(ArmaParams((), (), s2), ll, True, 1)

    def objective(phi, theta):
        v, F = innovations(y, phi, theta)
        return concentrated_loglik(v, F)[0]

    starts = [starting_values(y, order), (np.zeros(order.p), np.zeros(order.q))]
    x, _, converged, n_evals = maximize(objective, order, starts, max_evals)
    phi, theta = _unpack(x, order.p)
    v, F = innovations(y, phi, theta)
    _, s2 = concentrated_loglik(v, F)
    params = ArmaParams(phi, theta, s2)
    if not check_admissible(params):
        raise NumericalError(f"ARMA{order} fit left the admissible region")
    if not converged:
        logger.info("ARMA%s fit did not converge within %d evaluations", order, max_evals)
    return ArmaFit(params, arma_loglik(y, order, params), converged, n_evals)


def aic(loglik: float, n_params: int) -> float:
    if n_params < 0:
        raise ConfigError("n_params must be >= 0")
    return -2.0 * loglik + 2.0 * n_params


def bic(loglik: float, n_params: int, n_obs: int) -> float:
    if n_params < 0:
        raise ConfigError("n_params must be >= 0")
    return -2.0 * loglik + math.log(n_obs) * n_params


@dataclass
class OrderSearch:
    order: ArmaOrder
    criterion: float
    trace: list[tuple[ArmaOrder, float]] = field(default_factory=list)
    table: dict[ArmaOrder, float] = field(default_factory=dict)


def _rank(order: ArmaOrder, value: float):
    return (value, order.p + order.q, order.p)


def stepwise_search(series, max_p: int = 5, max_q: int = 5, ic: str = "aic",
                    fitter=None, min_root: float = 1.0) -> OrderSearch:
    """Stepwise information-criterion search over ARMA orders.

    Starts from (0,0), (1,0), (0,1), (1,1), then repeatedly moves to the best
    neighbour (p +/- 1, q +/- 1 and diagonal moves) with a strictly lower
    criterion.  Ties are broken towards smaller p + q, then smaller p.
    ``trace`` records the incumbent after every accepted move.

    Candidates whose fitted AR or MA polynomial has a root with modulus
    below ``min_root`` score +inf.  The default only enforces admissibility:
    overlapping aggregation windows put MA roots on the unit circle, so a
    margin such as auto-ARIMA's 1.01 would reject the right structure.
    """
    y = np.asarray(series, dtype=float)
    if max_p < 0 or max_q < 0:
        raise ConfigError("max_p and max_q must be >= 0")
    if ic not in ("aic", "bic"):
        raise ConfigError(f"unknown information criterion {ic!r}")
    need = 10 * (max_p + max_q + 1)
    if y.size < need:
        raise DataError(f"series of length {y.size} is too short for the search (need {need})")
    fitter = fitter or fit_arma

    table: dict[ArmaOrder, float] = {}

    def score(order: ArmaOrder) -> float:
        if order not in table:
            try:
                fit = fitter(y, order)
            except (NumericalError, DataError, np.linalg.LinAlgError) as exc:
                logger.debug("ARMA%s failed: %s", order, exc)
                table[order] = math.inf
            else:
                k = order.n_params
                if min_root_modulus(fit.params) < min_root:
                    table[order] = math.inf
                    return table[order]
                table[order] = aic(fit.loglik, k) if ic == "aic" else bic(fit.loglik, k, y.size)
        return table[order]

    def best_of(orders):
        scored = [(o, score(o)) for o in orders]
        return min(scored, key=lambda s: _rank(*s))

    initial = [ArmaOrder(p, q) for p, q in ((0, 0), (1, 0), (0, 1), (1, 1))
               if p <= max_p and q <= max_q]
    current, value = best_of(initial)
    if not np.isfinite(value):
        raise NumericalError("no admissible model")
    trace = [(current, value)]
    while True:
        neighbours = []
        for dp in (-1, 0, 1):
            for dq in (-1, 0, 1):
                p, q = current.p + dp, current.q + dq
                if (dp or dq) and 0 <= p <= max_p and 0 <= q <= max_q:
                    neighbours.append(ArmaOrder(p, q))
        cand, cand_value = best_of(neighbours) if neighbours else (current, value)
        if cand_value < value:
            current, value = cand, cand_value
            trace.append((current, value))
        else:
            break
    return OrderSearch(current, value, trace, table)


def select_order(series, max_p: int = 5, max_q: int = 5, ic: str = "aic",
                 min_root: float = 1.0) -> ArmaOrder:
    return stepwise_search(series, max_p, max_q, ic, min_root=min_root).order


def simulate_arma(order: ArmaOrder, params: ArmaParams, n: int, seed: int) -> np.ndarray:
    """Simulate ``n`` values after discarding ``10 (p+q+1) + 100`` burn-in steps.

    Innovations come from numpy's PCG64 generator seeded with ``seed``.
    """
    if params.order != order:
        raise ConfigError(f"params have order {params.order}, expected {order}")
    if n < 1:
        raise ConfigError("n must be >= 1")
    if params.sigma2 < 0 or not check_admissible(params):
        raise ConfigError("simulate_arma requires admissible parameters")
    burn = 10 * order.n_params + 100
    rng = np.random.Generator(np.random.PCG64(seed))
    e = rng.standard_normal(n + burn) * math.sqrt(params.sigma2)
    b = np.concatenate([[1.0], params.theta])
    a = np.concatenate([[1.0], -np.asarray(params.phi)])
    return signal.lfilter(b, a, e)[burn:]
