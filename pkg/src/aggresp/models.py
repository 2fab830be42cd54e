"""Model definitions shared by cross-validation and the experiment runner.

A model is a design recipe (intercept, time spline, weekday dummies, exposure
terms) plus a response treatment: either the raw counts under quasi-Poisson,
or a kernel-aggregated response under a Gaussian regression with optional
ARMA errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregationSpec, aggregate, kernel_weights
from .arma import ArmaOrder
from .basis import (
    CrossBasisSpec,
    DesignMatrix,
    SplineSpec,
    SurfaceGrid,
    crossbasis,
    default_knots,
    lag_knots_log,
    log_rr_surface,
    natural_time_basis,
    time_df,
)
from .errors import ConfigError
from .regression import (
    GlmFit,
    RegArmaFit,
    fit_reg_arma,
    fitted_values,
    quasipoisson_fit,
    two_stage_fit,
)
from .series import Dataset, DailySeries, as_array, day_of_week_indicators, day_of_week_names

FAMILIES = ("quasipoisson", "gaussian")
EXPOSURE_BASES = ("crossbasis", "linear", "none")


@dataclass(frozen=True)
class CrossBasisConfig:
    max_lag: int = 21
    predictor_percentiles: tuple[float, ...] = (10.0, 75.0, 90.0)
    predictor_degree: int = 3
    lag_knots: int = 3
    lag_degree: int = 3

    def __post_init__(self):
        object.__setattr__(self, "predictor_percentiles",
                           tuple(float(p) for p in self.predictor_percentiles))
        if self.max_lag < 0:
            raise ConfigError("max_lag must be >= 0")
        if self.lag_knots < 0 or self.predictor_degree < 1 or self.lag_degree < 0:
            raise ConfigError("invalid cross-basis spline settings")


@dataclass(frozen=True)
class ArmaSetting:
    """Either a fixed order or the bounds of a stepwise search."""

    max_p: int = 5
    max_q: int = 5
    order: ArmaOrder | None = None

    def __post_init__(self):
        if self.max_p < 0 or self.max_q < 0:
            raise ConfigError("max_p and max_q must be >= 0")


@dataclass(frozen=True)
class ModelConfig:
    name: str
    aggregation: AggregationSpec | None = None
    family: str = "quasipoisson"
    arma: ArmaSetting | None = None
    exposure_basis: str = "crossbasis"
    crossbasis: CrossBasisConfig = field(default_factory=CrossBasisConfig)
    time_df_per_year: float = 8.0
    day_of_week: bool | None = None
    fix_order_in_cv: bool = False

    def __post_init__(self):
        if not self.name or "/" in self.name:
            raise ConfigError(f"invalid model name {self.name!r}")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        aggregated = self.aggregation is not None
        if aggregated != (self.family == "gaussian"):
            raise ConfigError(
                f"model {self.name!r}: aggregated responses are Gaussian and raw responses are "
                f"quasi-Poisson; got family {self.family!r} with "
                f"{'an' if aggregated else 'no'} aggregation"
            )
        if self.arma is not None and not aggregated:
            raise ConfigError(f"model {self.name!r}: ARMA errors need an aggregated response")
        if self.exposure_basis not in EXPOSURE_BASES:
            raise ConfigError(f"unknown exposure basis {self.exposure_basis!r}")
        if self.time_df_per_year < 0:
            raise ConfigError("time_df_per_year must be >= 0")

    @property
    def use_day_of_week(self) -> bool:
        return self.aggregation is None if self.day_of_week is None else self.day_of_week

    @property
    def max_lag(self) -> int:
        return self.crossbasis.max_lag if self.exposure_basis == "crossbasis" else 0

    @property
    def window(self) -> int:
        return 1 if self.aggregation is None else self.aggregation.H


# -- designs -----------------------------------------------------------------------

def crossbasis_spec(exposure, cfg: CrossBasisConfig) -> CrossBasisSpec:
    """Predictor knots at exposure percentiles, lag knots equally spaced in log lag."""
    x = as_array(exposure)
    x = x[~np.isnan(x)]
    knots = default_knots(x, cfg.predictor_percentiles)
    predictor = SplineSpec(tuple(knots), (float(x.min()), float(x.max())), cfg.predictor_degree)
    L = cfg.max_lag
    lag = None
    if L > 0:
        lag_knots = tuple(lag_knots_log(L, cfg.lag_knots)) if cfg.lag_knots else ()
        lag = SplineSpec(lag_knots, (0.0, float(L)), cfg.lag_degree)
    return CrossBasisSpec(predictor, lag, L)


@dataclass(frozen=True, eq=False)
class ModelDesign:
    matrix: DesignMatrix
    cb_spec: CrossBasisSpec | None

    def exposure_columns(self) -> np.ndarray:
        prefix = "cb_" if self.cb_spec is not None else "x"
        return self.matrix.column_index(prefix)


def build_design(data: Dataset, cfg: ModelConfig, with_trend: bool = True,
                 cb_spec: CrossBasisSpec | None = None) -> ModelDesign:
    n = len(data)
    cols: dict[str, np.ndarray] = {"intercept": np.ones(n)}
    if with_trend and cfg.time_df_per_year > 0 and time_df(n, cfg.time_df_per_year) >= 2:
        basis = natural_time_basis(n, cfg.time_df_per_year)
        for j in range(basis.shape[1]):
            cols[f"time{j + 1}"] = basis[:, j]
    if cfg.use_day_of_week:
        dow = day_of_week_indicators(data.response)
        for j, name in enumerate(day_of_week_names()):
            cols[name] = dow[:, j]
    base = DesignMatrix.from_columns(cols)
    if cfg.exposure_basis == "none":
        return ModelDesign(base, None)
    if cfg.exposure_basis == "linear":
        x = data.exposure.values
        lin = DesignMatrix(x[:, None], ("x",), ~np.isnan(x))
        return ModelDesign(base.hstack(lin), None)
    spec = cb_spec or crossbasis_spec(data.exposure, cfg.crossbasis)
    return ModelDesign(base.hstack(crossbasis(data.exposure, spec)), spec)


# -- fitting -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelFit:
    config: ModelConfig
    design: ModelDesign
    fitted: DailySeries
    beta: np.ndarray
    order: ArmaOrder | None
    loglik: float
    aic: float
    n_params: int
    dropped_rows: int
    response_scale: float
    reg: RegArmaFit | None = None
    glm: GlmFit | None = None

    @property
    def names(self) -> tuple[str, ...]:
        return self.design.matrix.names

    def surface(self, temp_grid, reference_temp: float) -> SurfaceGrid | None:
        """Relative-risk grid.

        Gaussian models work on the response scale, so the additive
        exposure effect is expressed relative to the mean aggregated response
        before exponentiating.
        """
        spec = self.design.cb_spec
        if spec is None:
            return None
        beta_cb = self.beta[self.design.exposure_columns()]
        temps = np.sort(np.asarray(temp_grid, dtype=float))
        log_rr = log_rr_surface(beta_cb, spec, temps, reference_temp) / self.response_scale
        return SurfaceGrid(temps, np.arange(spec.max_lag + 1), np.exp(log_rr), float(reference_temp))


def aggregated_response(data: Dataset, cfg: ModelConfig) -> DailySeries:
    return aggregate(data.response, kernel_weights(cfg.aggregation))


def fit_regression(X: DesignMatrix, y_agg, cfg: ModelConfig,
                   order: ArmaOrder | None = None) -> RegArmaFit:
    """Gaussian fit honoring the model's ARMA setting (or a forced ``order``)."""
    if order is None and cfg.arma is not None and cfg.arma.order is not None:
        order = cfg.arma.order
    if order is None and cfg.arma is None:
        order = ArmaOrder(0, 0)
    if order is not None:
        return fit_reg_arma(X, y_agg, order)
    return two_stage_fit(X, y_agg, cfg.arma.max_p, cfg.arma.max_q)


def fit_model(data: Dataset, cfg: ModelConfig, design: ModelDesign | None = None) -> ModelFit:
    """Fit ``cfg`` on the full data; ``fitted`` is on the raw response scale."""
    design = design or build_design(data, cfg)
    X = design.matrix
    if cfg.family == "quasipoisson":
        glm = quasipoisson_fit(X, data.response)
        return ModelFit(cfg, design, glm.fitted, glm.beta, None, math.nan, math.nan,
                        glm.beta.size, 0, 1.0, glm=glm)
    y_agg = aggregated_response(data, cfg)
    reg = fit_regression(X, y_agg, cfg)
    fitted = fitted_values(reg, X, "one_step")
    scale = float(np.nanmean(y_agg.values[reg.rows[0]:reg.rows[1]]))
    if not scale > 0:
        scale = 1.0
    return ModelFit(cfg, design, fitted, reg.beta, reg.order, reg.loglik, reg.aic,
                    reg.n_params, reg.dropped_rows, scale, reg=reg)
