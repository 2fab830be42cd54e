"""Time-series regression with a temporally aggregated response."""

from .aggregation import AggregationSpec, WeightVector, aggregate, kernel_weights
from .arma import ArmaOrder, ArmaParams, arma_loglik, fit_arma, select_order, simulate_arma
from .basis import CrossBasisSpec, DesignMatrix, SplineSpec, SurfaceGrid, bspline_basis, crossbasis, rr_surface
from .errors import AggrespError, ConfigError, DataError, NumericalError, RankDeficientError
from .evaluation import CvPlan, Score, hv_block_cv, hv_block_folds, r_squared
from .regression import GlmFit, RegArmaFit, fit_reg_arma, fitted_values, ols_fit, quasipoisson_fit, two_stage_fit
from .series import DailySeries, Dataset, load_series
from .synthdata import ScenarioSpec, gen_exposure, gen_response

__version__ = "0.1.0"

__all__ = [
    "AggregationSpec", "WeightVector", "aggregate", "kernel_weights",
    "ArmaOrder", "ArmaParams", "arma_loglik", "fit_arma", "select_order", "simulate_arma",
    "CrossBasisSpec", "DesignMatrix", "SplineSpec", "SurfaceGrid", "bspline_basis", "crossbasis",
    "rr_surface",
    "AggrespError", "ConfigError", "DataError", "NumericalError", "RankDeficientError",
    "CvPlan", "Score", "hv_block_cv", "hv_block_folds", "r_squared",
    "GlmFit", "RegArmaFit", "fit_reg_arma", "fitted_values", "ols_fit", "quasipoisson_fit",
    "two_stage_fit",
    "DailySeries", "Dataset", "load_series",
    "ScenarioSpec", "gen_exposure", "gen_response",
]
