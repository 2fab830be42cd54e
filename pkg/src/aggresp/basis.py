"""Spline bases and distributed-lag cross-bases.

B-splines are evaluated with the Cox-de Boor recursion, vectorized over the
evaluation points.  The natural cubic basis follows the usual construction
(as in R's ``splines::ns`` without intercept): drop the B-spline that is
non-zero at the lower boundary, then project onto the null space of the
second-derivative constraints at both boundaries.  The result has
``len(interior_knots) + 1`` columns, every column vanishes at the lower
boundary, and the basis is extended linearly outside the boundary knots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .series import DailySeries, as_array


@dataclass(frozen=True)
class SplineSpec:
    interior_knots: tuple[float, ...]
    boundary_knots: tuple[float, float]
    degree: int = 3
    natural: bool = False

    def __post_init__(self):
        knots = tuple(float(k) for k in self.interior_knots)
        lo, hi = (float(b) for b in self.boundary_knots)
        object.__setattr__(self, "interior_knots", knots)
        object.__setattr__(self, "boundary_knots", (lo, hi))
        if self.degree < 0:
            raise ConfigError("spline degree must be >= 0")
        if self.natural and self.degree != 3:
            raise ConfigError("natural splines are cubic")
        if not lo < hi:
            raise ConfigError(f"boundary knots must satisfy low < high, got ({lo}, {hi})")
        grid = (lo,) + knots + (hi,)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(
                "interior knots must be strictly increasing and strictly inside the boundary knots"
            )

    @property
    def n_basis(self) -> int:
        k = len(self.interior_knots)
        return k + 1 if self.natural else k + self.degree + 1

    def knot_vector(self) -> np.ndarray:
        lo, hi = self.boundary_knots
        d = self.degree
        return np.array([lo] * (d + 1) + list(self.interior_knots) + [hi] * (d + 1))


def _cox_de_boor(x: np.ndarray, t: np.ndarray, degree: int, nu: int = 0) -> np.ndarray:
    """``nu``-th derivative of all B-splines of ``degree`` on knot vector ``t``."""
    if nu > degree:
        return np.zeros((x.size, t.size - degree - 1))
    if nu > 0:
        lower = _cox_de_boor(x, t, degree - 1, nu - 1)
        n = t.size - degree - 1
        den_l = t[degree:degree + n] - t[:n]
        den_r = t[degree + 1:degree + 1 + n] - t[1:n + 1]
        inv_l = np.divide(degree, den_l, out=np.zeros(n), where=den_l > 0)
        inv_r = np.divide(degree, den_r, out=np.zeros(n), where=den_r > 0)
        return lower[:, :n] * inv_l - lower[:, 1:n + 1] * inv_r

    # degree-0 indicators on half-open spans; the last non-empty span is closed
    B = ((t[:-1] <= x[:, None]) & (x[:, None] < t[1:])).astype(float)
    last = np.nonzero(t[:-1] < t[1:])[0][-1]
    B[x == t[-1], last] = 1.0
    for d in range(1, degree + 1):
        n = t.size - d - 1
        den_l = t[d:d + n] - t[:n]
        den_r = t[d + 1:d + 1 + n] - t[1:n + 1]
        a = np.divide(x[:, None] - t[:n], den_l, out=np.zeros((x.size, n)), where=den_l > 0)
        b = np.divide(t[d + 1:d + 1 + n] - x[:, None], den_r, out=np.zeros((x.size, n)),
                      where=den_r > 0)
        B = a * B[:, :n] + b * B[:, 1:n + 1]
    return B


def _natural_projection(spec: SplineSpec) -> np.ndarray:
    t = spec.knot_vector()
    ends = np.array(spec.boundary_knots)
    const = _cox_de_boor(ends, t, 3, nu=2)[:, 1:]
    q, _ = np.linalg.qr(const.T, mode="complete")
    return q[:, 2:]


def bspline_basis(x, spec: SplineSpec) -> np.ndarray:
    """Evaluate the spline basis of ``spec`` at ``x`` (rows) for each function (columns).

    Plain B-splines reject points outside the boundary knots; natural
    splines extrapolate linearly.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.isnan(x).any():
        raise DataError("cannot evaluate a spline basis at missing values")
    lo, hi = spec.boundary_knots
    t = spec.knot_vector()
    if not spec.natural:
        if x.size and (x.min() < lo or x.max() > hi):
            raise DataError(f"values outside the boundary knots [{lo}, {hi}]")
        return _cox_de_boor(x, t, spec.degree)

    proj = _natural_projection(spec)
    xc = np.clip(x, lo, hi)
    out = _cox_de_boor(xc, t, 3)[:, 1:] @ proj
    outside = (x < lo) | (x > hi)
    if outside.any():
        ends = np.array([lo, hi])
        val = _cox_de_boor(ends, t, 3)[:, 1:] @ proj
        slope = _cox_de_boor(ends, t, 3, nu=1)[:, 1:] @ proj
        below, above = x < lo, x > hi
        out[below] = val[0] + (x[below] - lo)[:, None] * slope[0]
        out[above] = val[1] + (x[above] - hi)[:, None] * slope[1]
    return out


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def time_df(n_days: int, df_per_year: float) -> int:
    return _round_half_up(df_per_year * n_days / 365.25)


def natural_time_basis(n_days: int, df_per_year: float) -> np.ndarray:
    """Natural cubic spline of the day index with ``round(df_per_year * years)`` columns.

    Interior knots sit at equally spaced quantiles of ``0..n_days-1``.  The
    basis carries no intercept column; pair it with one in a design.
    """
    if df_per_year <= 0:
        raise ConfigError("df_per_year must be positive")
    df = time_df(n_days, df_per_year)
    if df < 2:
        raise ConfigError(
            f"{df_per_year} df/year over {n_days} days rounds to {df} degrees of freedom (need >= 2)"
        )
    day = np.arange(n_days, dtype=float)
    probs = np.arange(1, df) / df
    knots = tuple(np.quantile(day, probs))
    spec = SplineSpec(knots, (0.0, float(n_days - 1)), 3, natural=True)
    return bspline_basis(day, spec)


def trend_basis(n_days: int, fit_mask, df_per_year: float) -> np.ndarray:
    """Natural time spline placed on the ``fit_mask`` rows, evaluated on all rows.

    The degrees of freedom follow the fitted span, knots sit at quantiles of
    the fitted day indices and the boundary knots at their extremes, so rows beyond the fitted range are extrapolated
    linearly.  With every row fitted this equals :func:`natural_time_basis`.
    """
    if df_per_year <= 0:
        raise ConfigError("df_per_year must be positive")
    day = np.arange(n_days, dtype=float)
    fit_days = day[np.asarray(fit_mask, dtype=bool)]
    if fit_days.size < 2:
        raise DataError("a time trend needs at least two fitted days")
    span = int(fit_days[-1] - fit_days[0]) + 1
    df = time_df(span, df_per_year)
    if df < 2:
        raise ConfigError(
            f"{df_per_year} df/year over {span} days rounds to {df} degrees of freedom (need >= 2)"
        )
    knots = tuple(np.quantile(fit_days, np.arange(1, df) / df))
    spec = SplineSpec(knots, (fit_days[0], fit_days[-1]), 3, natural=True)
    return bspline_basis(day, spec)


def default_knots(exposure: DailySeries | Sequence[float], percentiles=(10, 75, 90)) -> np.ndarray:
    """Empirical percentiles (linear interpolation between order statistics)."""
    values = as_array(exposure)
    values = values[~np.isnan(values)]
    if values.size < 10:
        raise DataError("need at least 10 non-missing exposure values to place knots")
    p = np.asarray(percentiles, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p <= 0) or np.any(p >= 100):
        raise ConfigError("percentiles must lie strictly between 0 and 100")
    if np.any(np.diff(p) <= 0):
        raise ConfigError("percentiles must be strictly increasing")
    return np.percentile(values, p, method="linear")


def lag_knots_log(L: int, n_knots: int = 3) -> np.ndarray:
    """Knots equally spaced on the log scale strictly between lag 1 and lag ``L``."""
    if L < 1 or n_knots < 1:
        raise ConfigError("lag_knots_log needs L >= 1 and n_knots >= 1")
    j = np.arange(1, n_knots + 1)
    return np.exp(j * np.log(L) / (n_knots + 1))


@dataclass(frozen=True)
class CrossBasisSpec:
    """Predictor-by-lag spline product.

    ``lag=None`` uses a single constant lag function (an unconstrained moving
    sum of the predictor basis), the only option when ``max_lag == 0``.
    ``predictor_intercept=False`` drops the first predictor B-spline so the
    cross-basis is not collinear with a model intercept.
    """

    predictor: SplineSpec
    lag: SplineSpec | None
    max_lag: int
    predictor_intercept: bool = False

    def __post_init__(self):
        if self.max_lag < 0:
            raise ConfigError("max_lag must be >= 0")
        if self.lag is not None and self.lag.boundary_knots != (0.0, float(self.max_lag)):
            raise ConfigError("lag spline boundary knots must be exactly (0, max_lag)")
        if self.n_predictor < 1:
            raise ConfigError("predictor basis has no columns after dropping the intercept")

    @property
    def n_predictor(self) -> int:
        return self.predictor.n_basis - (0 if self.predictor_intercept else 1)

    @property
    def n_lag(self) -> int:
        return 1 if self.lag is None else self.lag.n_basis

    @property
    def n_columns(self) -> int:
        return self.n_predictor * self.n_lag

    def column_names(self) -> list[str]:
        return [f"cb_v{j + 1}_l{k + 1}" for j in range(self.n_predictor) for k in range(self.n_lag)]

    def predictor_basis(self, x) -> np.ndarray:
        B = bspline_basis(x, self.predictor)
        return B if self.predictor_intercept else B[:, 1:]

    def lag_basis(self) -> np.ndarray:
        lags = np.arange(self.max_lag + 1, dtype=float)
        if self.lag is None:
            return np.ones((lags.size, 1))
        return bspline_basis(lags, self.lag)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    names: tuple[str, ...]
    row_valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        names = tuple(self.names)
        row_valid = np.asarray(self.row_valid, dtype=bool)
        if values.shape[1] != len(names):
            raise ConfigError("one name per design column is required")
        if len(set(names)) != len(names):
            raise ConfigError("design column names must be unique")
        if row_valid.shape != (values.shape[0],):
            raise ConfigError("row_valid must have one entry per row")
        row_valid = row_valid & ~np.isnan(values).any(axis=1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "row_valid", row_valid)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def from_columns(cls, columns: dict[str, np.ndarray]) -> "DesignMatrix":
        names = list(columns)
        values = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
        return cls(values, tuple(names), np.ones(values.shape[0], dtype=bool))

    def hstack(self, *others: "DesignMatrix") -> "DesignMatrix":
        mats = (self,) + others
        return DesignMatrix(
            np.hstack([m.values for m in mats]),
            sum((m.names for m in mats), ()),
            np.logical_and.reduce([m.row_valid for m in mats]),
        )

    def rows(self, idx) -> "DesignMatrix":
        return DesignMatrix(self.values[idx], self.names, self.row_valid[idx])

    def column_index(self, prefix: str) -> np.ndarray:
        return np.array([i for i, n in enumerate(self.names) if n.startswith(prefix)], dtype=int)


def crossbasis(exposure: DailySeries | Sequence[float], spec: CrossBasisSpec) -> DesignMatrix:
    """Column ``(j, k)`` at row ``t`` is ``sum_l B_j(x[t-l]) * C_k(l)``.

    Rows with ``t < max_lag`` or touching a missing exposure are flagged
    invalid (and hold NaN).
    """
    x = as_array(exposure)
    n, L = x.size, spec.max_lag
    if n <= L:
        raise DataError(f"exposure of length {n} is too short for max lag {L}")
    ok = ~np.isnan(x)
    B = np.full((n, spec.n_predictor), np.nan)
    B[ok] = spec.predictor_basis(x[ok])
    C = spec.lag_basis()

    out = np.zeros((n, spec.n_predictor, spec.n_lag))
    for lag in range(L + 1):
        shifted = np.full_like(B, np.nan)
        shifted[lag:] = B[:n - lag]
        out += shifted[:, :, None] * C[lag][None, None, :]
    values = out.reshape(n, spec.n_columns)
    valid = ~np.isnan(values).any(axis=1)
    valid[:L] = False
    values[~valid] = np.nan
    return DesignMatrix(values, tuple(spec.column_names()), valid)


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    temp_grid: np.ndarray
    lag_grid: np.ndarray
    rr: np.ndarray
    reference_temp: float

    def rows(self):
        """Long format ``(temp, lag, rr)`` with temperature as the outer loop."""
        for i, temp in enumerate(self.temp_grid.tolist()):
            for j, lag in enumerate(self.lag_grid.tolist()):
                yield temp, int(lag), float(self.rr[i, j])


def log_rr_surface(beta, spec: CrossBasisSpec, temp_grid, reference_temp: float) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != spec.n_columns:
        raise ConfigError(f"beta has {beta.size} entries, cross-basis has {spec.n_columns} columns")
    temps = np.asarray(temp_grid, dtype=float)
    diff = spec.predictor_basis(temps) - spec.predictor_basis([reference_temp])
    coef = beta.reshape(spec.n_predictor, spec.n_lag)
    return diff @ coef @ spec.lag_basis().T


def rr_surface(beta, spec: CrossBasisSpec, temp_grid, reference_temp: float) -> SurfaceGrid:
    """Relative risk over (temperature, lag) against ``reference_temp``."""
    temps = np.sort(np.asarray(temp_grid, dtype=float))
    lo, hi = spec.predictor.boundary_knots
    if not spec.predictor.natural and not lo <= reference_temp <= hi:
        raise DataError(f"reference temperature {reference_temp} outside [{lo}, {hi}]")
    log_rr = log_rr_surface(beta, spec, temps, reference_temp)
    return SurfaceGrid(temps, np.arange(spec.max_lag + 1), np.exp(log_rr), float(reference_temp))
