"""Goodness of fit and hv-block cross-validation.

Both criteria are measured against the raw (pre-aggregation) response, so
models fitted to differently aggregated responses can be compared.  Inside
cross-validation the response is detrended on the training rows only, and the
training and validation blocks are aggregated separately so no raw value
crosses the gap.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aggregation import aggregate_blocks, kernel_weights
from .arma import ArmaOrder
from .basis import DesignMatrix, time_df, trend_basis
from .errors import AggrespError, ConfigError, DataError
from .models import ModelConfig, ModelDesign, build_design, fit_regression
from .regression import fitted_values, quasipoisson_fit
from .series import Dataset, as_array, fit_trend, runs

logger = logging.getLogger(__name__)

DEFAULT_V = 45
DEFAULT_DETREND_DF = 2.0


def r_squared(y_original, fitted) -> float:
    """Sum-of-squares R^2 over rows where both series are observed."""
    y = as_array(y_original)
    f = as_array(fitted)
    if y.shape != f.shape:
        raise DataError(f"length mismatch: {y.size} observed vs {f.size} fitted")
    ok = ~np.isnan(y) & ~np.isnan(f)
    if ok.sum() < 2:
        raise DataError("r_squared needs at least two jointly observed rows")
    yo = y[ok]
    sst = float(np.sum((yo - yo.mean()) ** 2))
    if sst == 0.0:
        raise DataError("r_squared is undefined for a constant response")
    return 1.0 - float(np.sum((yo - f[ok]) ** 2)) / sst


@dataclass(frozen=True)
class CvPlan:
    h: int
    v: int = DEFAULT_V
    stride: int | None = None
    detrend_df_per_year: float = DEFAULT_DETREND_DF

    def __post_init__(self):
        if self.stride is None:
            object.__setattr__(self, "stride", 2 * self.v + 1)
        if self.h < 0 or self.v < 0 or self.stride < 1:
            raise ConfigError(f"invalid CV plan h={self.h}, v={self.v}, stride={self.stride}")
        if self.detrend_df_per_year < 0:
            raise ConfigError("detrend_df_per_year must be >= 0")


def default_plan(cfg: ModelConfig, v: int = DEFAULT_V) -> CvPlan:
    """Gap ``h = H - 1 + L``: no training row shares a raw response or lagged exposure."""
    return CvPlan(h=cfg.window - 1 + cfg.max_lag, v=v)


@dataclass(frozen=True)
class Fold:
    index: int
    center: int
    validation: np.ndarray
    training: np.ndarray


def hv_block_folds(n: int, plan: CvPlan) -> list[Fold]:
    """Validation blocks ``[c - v, c + v]`` at centers ``v, v + stride, ...``.

    Training rows are those further than ``h + v`` from the center.
    """
    h, v = plan.h, plan.v
    if n <= 2 * (h + v) + 1:
        raise DataError(f"series of length {n} is too short for h={h}, v={v}")
    idx = np.arange(n)
    folds = []
    for k, c in enumerate(range(v, n - v, plan.stride)):
        validation = idx[c - v: c + v + 1]
        training = idx[np.abs(idx - c) > h + v]
        folds.append(Fold(k, c, validation, training))
    return folds


@dataclass(frozen=True)
class FoldResult:
    fold: int
    center: int
    n_valid_points: int
    mse: float
    status: str = "ok"


@dataclass(frozen=True)
class Score:
    r2: float = math.nan
    cv_error: float = math.nan
    cv_se: float = math.nan
    n_folds: int = 0
    skipped_folds: int = 0
    folds: tuple[FoldResult, ...] = field(default=(), repr=False)


# -- per-fold work -----------------------------------------------------------------

def _poisson_log_trend(y: np.ndarray, train: np.ndarray, df_per_year: float) -> np.ndarray:
    n = y.size
    rows = train & ~np.isnan(y)
    cols = {"intercept": np.ones(n)}
    days = np.nonzero(rows)[0]
    if df_per_year > 0 and days.size and time_df(int(days[-1] - days[0]) + 1, df_per_year) >= 2:
        basis = trend_basis(n, rows, df_per_year)
        cols.update({f"time{j + 1}": basis[:, j] for j in range(basis.shape[1])})
    X = DesignMatrix.from_columns(cols)
    glm = quasipoisson_fit(X, np.where(rows, y, np.nan))
    return X.values @ glm.beta


def _non_constant(X: DesignMatrix) -> np.ndarray:
    """Design columns other than the intercept, missing on invalid rows."""
    keep = [i for i, name in enumerate(X.names) if name != "intercept"]
    out = X.values[:, keep].copy()
    out[~X.row_valid] = np.nan
    return out


def fold_training_response(y: np.ndarray, fold: Fold, cfg: ModelConfig, plan: CvPlan,
                           covariates: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Training-only trend and the aggregated detrended training response of one fold.

    Validation and gap rows are masked before anything is computed, so the
    result does not depend on their values.
    """
    y = np.asarray(y, dtype=float)
    train = np.zeros(y.size, dtype=bool)
    train[fold.training] = True
    y_train = np.where(train, y, np.nan)
    trend = fit_trend(y_train, train, plan.detrend_df_per_year, covariates)
    y_agg = aggregate_blocks(y_train - trend, runs(train), kernel_weights(cfg.aggregation))
    return trend, y_agg


def _evaluate_fold(y: np.ndarray, design: ModelDesign, cfg: ModelConfig, fold: Fold,
                   plan: CvPlan, order: ArmaOrder | None) -> tuple[np.ndarray, str]:
    """Squared prediction errors on the scored validation rows of one fold."""
    n = y.size
    X = design.matrix
    train = np.zeros(n, dtype=bool)
    train[fold.training] = True
    val_block = (int(fold.validation[0]), int(fold.validation[-1]) + 1)
    y_train = np.where(train, y, np.nan)

    if cfg.family == "quasipoisson":
        offset = _poisson_log_trend(y, train, plan.detrend_df_per_year)
        glm = quasipoisson_fit(X, y_train, offset=offset)
        pred = np.exp(X.values @ glm.beta + offset)
        scored = np.zeros(n, dtype=bool)
        scored[val_block[0]:val_block[1]] = True
    else:
        trend, y_agg_train = fold_training_response(y, fold, cfg, plan, _non_constant(X))
        y_agg_val = aggregate_blocks(y - trend, [val_block], kernel_weights(cfg.aggregation))
        fit = fit_regression(X, y_agg_train, cfg, order)
        pred = fitted_values(fit, X, "mean_only").values + trend
        scored = ~np.isnan(y_agg_val)
    scored &= X.row_valid & ~np.isnan(y) & ~np.isnan(pred)
    return (y[scored] - pred[scored]) ** 2, "ok"


def _fold_task(args):
    y, design, cfg, fold, plan, order = args
    try:
        err, status = _evaluate_fold(y, design, cfg, fold, plan, order)
    except (AggrespError, np.linalg.LinAlgError) as exc:
        logger.warning("fold %d (center %d) skipped: %s", fold.index, fold.center, exc)
        return fold, None, f"skipped: {exc}"
    if err.size == 0:
        return fold, None, "skipped: no scored validation rows"
    return fold, err, status


def hv_block_cv(data: Dataset, model_config: ModelConfig, plan: CvPlan | None = None,
                order: ArmaOrder | None = None, jobs: int = 1) -> Score:
    """hv-block CV error (mean squared error on the raw response scale).

    ``order`` fixes the ARMA order in every fold; by default the order is
    re-selected inside each training set.
    """
    cfg = model_config
    plan = plan or default_plan(cfg)
    y = data.response.values
    folds = hv_block_folds(y.size, plan)
    design = build_design(data, cfg, with_trend=False)
    tasks = [(y, design, cfg, f, plan, order) for f in folds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_fold_task, tasks))
    else:
        outcomes = [_fold_task(t) for t in tasks]

    results, errors, means = [], [], []
    for fold, err, status in outcomes:
        if err is None:
            results.append(FoldResult(fold.index, fold.center, 0, math.nan, status))
            continue
        results.append(FoldResult(fold.index, fold.center, int(err.size), float(err.mean())))
        errors.append(err)
        means.append(float(err.mean()))
    n_ok = len(means)
    if n_ok == 0:
        raise DataError(f"all {len(folds)} cross-validation folds were unfittable")
    cv_error = float(np.concatenate(errors).mean())
    cv_se = float(np.std(means, ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else 0.0
    return Score(math.nan, cv_error, cv_se, n_ok, len(folds) - n_ok, tuple(results))
