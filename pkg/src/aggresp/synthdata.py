"""Seeded synthetic exposure and response series with a known lag surface.

Random numbers come from numpy's PCG64 bit generator.  Streams are split
with ``SeedSequence(seed, spawn_key=(k,))``: ``k = 0`` drives the exposure
noise and ``k = 1`` the response noise, so changing the response family
never perturbs the exposure path.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .basis import SurfaceGrid
from .errors import ConfigError, DataError
from .series import Dataset, DailySeries

EXPOSURE_STREAM = 0
RESPONSE_STREAM = 1
YEAR = 365.25


def rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


# -- ground-truth surfaces ---------------------------------------------------------

def _hot(x, threshold=20.0):
    return np.maximum(x - threshold, 0.0)


def _cold(x, threshold=-10.0):
    return np.maximum(threshold - x, 0.0)


def _default_surface(x, lag):
    """Flat between -10 and 20 degrees; acute heat over lags 0-3, delayed cold near lag 7."""
    heat = 0.03 * _hot(x) * np.maximum(1.0 - lag / 4.0, 0.0)
    displacement = -0.006 * _hot(x) * np.exp(-0.5 * ((lag - 12.5) / 1.5) ** 2)
    cold = 0.012 * _cold(x) * np.exp(-0.5 * ((lag - 7.5) / 2.5) ** 2)
    return heat + displacement + cold


def _short_memory_surface(x, lag):
    """Heat effect confined to lags 0 and 1."""
    return 0.04 * _hot(x) * np.where(lag == 0, 1.0, np.where(lag == 1, 0.5, 0.0))


def _null_surface(x, lag):
    return np.zeros(np.broadcast(x, lag).shape)


SURFACES: dict[str, Callable] = {
    "default": _default_surface,
    "short_memory": _short_memory_surface,
    "null": _null_surface,
}

# Largest lag with a non-zero contribution, per surface.
EFFECT_SPAN = {"default": 16, "short_memory": 1, "null": 0}


# -- scenario ---------------------------------------------------------------------

@dataclass(frozen=True)
class ExposureSpec:
    seasonal_amplitude: float = 15.0
    seasonal_mean: float = 6.0
    ar_coef: float = 0.7
    noise_sd: float = 4.0
    peak_day: float = 200.0

    def __post_init__(self):
        if not -1.0 < self.ar_coef < 1.0:
            raise ConfigError("ar_coef must lie in (-1, 1)")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")


@dataclass(frozen=True)
class TruthSpec:
    surface: str = "default"
    baseline_rate: float = 15.0
    max_lag: int = 21

    def __post_init__(self):
        if self.surface not in SURFACES:
            raise ConfigError(f"unknown truth surface {self.surface!r}; expected one of {sorted(SURFACES)}")
        if not self.baseline_rate > 0:
            raise ConfigError("baseline_rate must be > 0")
        if self.max_lag < 0:
            raise ConfigError("max_lag must be >= 0")


@dataclass(frozen=True)
class NoiseSpec:
    family: str = "poisson"
    extra_sd: float = 3.0

    def __post_init__(self):
        if self.family not in ("poisson", "gaussian"):
            raise ConfigError(f"unknown noise family {self.family!r}")
        if self.extra_sd < 0:
            raise ConfigError("extra_sd must be >= 0")


@dataclass(frozen=True)
class ScenarioSpec:
    n_days: int = 3653
    seed: int = 1
    exposure: ExposureSpec = field(default_factory=ExposureSpec)
    truth: TruthSpec = field(default_factory=TruthSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    start_date: str = "2000-01-01"

    def __post_init__(self):
        if self.n_days <= 10 * self.truth.max_lag or self.n_days < 2:
            raise ConfigError(f"n_days must exceed 10 * max_lag ({10 * self.truth.max_lag})")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        try:
            dt.date.fromisoformat(self.start_date)
        except ValueError:
            raise ConfigError(f"invalid start_date {self.start_date!r}") from None

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        try:
            parts = {
                "exposure": ExposureSpec(**d.pop("exposure", {})),
                "truth": TruthSpec(**d.pop("truth", {})),
                "noise": NoiseSpec(**d.pop("noise", {})),
            }
            return cls(**d, **parts)
        except TypeError as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return ScenarioSpec(self.n_days, seed, self.exposure, self.truth, self.noise, self.start_date)


def gen_exposure(spec: ScenarioSpec) -> DailySeries:
    """Annual cosine plus a stationary AR(1) anomaly whose marginal sd is ``noise_sd``."""
    e = spec.exposure
    t = np.arange(spec.n_days, dtype=float)
    x = e.seasonal_mean + e.seasonal_amplitude * np.cos(2.0 * math.pi * (t - e.peak_day) / YEAR)
    if e.noise_sd > 0:
        z = rng_for(spec.seed, EXPOSURE_STREAM).standard_normal(spec.n_days)
        innov_sd = e.noise_sd * math.sqrt(1.0 - e.ar_coef ** 2)
        anomaly = np.empty(spec.n_days)
        anomaly[0] = e.noise_sd * z[0]
        for i in range(1, spec.n_days):
            anomaly[i] = e.ar_coef * anomaly[i - 1] + innov_sd * z[i]
        x = x + anomaly
    return DailySeries.from_values(x, spec.start_date)


def _lag_sum(exposure: DailySeries, spec: ScenarioSpec) -> np.ndarray:
    """``sum_l s(x[t-l], l)``; NaN where the lag history is incomplete."""
    x = exposure.values
    L = spec.truth.max_lag
    n = x.size
    if n <= L:
        raise DataError(f"exposure of length {n} is too short for max lag {L}")
    surface = SURFACES[spec.truth.surface]
    total = np.zeros(n)
    total[:L] = np.nan
    for lag in range(L + 1):
        shifted = np.full(n, np.nan)
        shifted[lag:] = x[: n - lag]
        total += surface(shifted, float(lag))
    return total


def log_rate(exposure: DailySeries, spec: ScenarioSpec) -> np.ndarray:
    """``log(baseline) + sum_l s(x[t-l], l)``; NaN where the lag history is incomplete."""
    return math.log(spec.truth.baseline_rate) + _lag_sum(exposure, spec)


def gen_response(exposure: DailySeries, spec: ScenarioSpec) -> DailySeries:
    """Counts (or Gaussian values) around the true rate, plus extra measurement noise.

    With extra noise on the Poisson family the result is rounded and clipped
    at zero so it stays a count series.
    """
    mu = spec.truth.baseline_rate * np.exp(_lag_sum(exposure, spec))
    ok = ~np.isnan(mu)
    rng = rng_for(spec.seed, RESPONSE_STREAM)
    y = np.full(mu.size, np.nan)
    noise = spec.noise
    if noise.family == "poisson":
        y[ok] = rng.poisson(mu[ok]).astype(float)
    else:
        y[ok] = mu[ok]
    if noise.extra_sd > 0:
        y[ok] += noise.extra_sd * rng.standard_normal(int(ok.sum()))
        if noise.family == "poisson":
            y[ok] = np.maximum(np.round(y[ok]), 0.0)
    return exposure.with_values(y)


def gen_dataset(spec: ScenarioSpec) -> Dataset:
    x = gen_exposure(spec)
    return Dataset(gen_response(x, spec), x, label=f"scenario-seed{spec.seed}")


def truth_surface(spec: ScenarioSpec, temp_grid, reference_temp: float) -> SurfaceGrid:
    """True relative risks on the same grid layout as an estimated surface."""
    surface = SURFACES[spec.truth.surface]
    temps = np.sort(np.asarray(temp_grid, dtype=float))
    lags = np.arange(spec.truth.max_lag + 1)
    T, Lg = np.meshgrid(temps, lags.astype(float), indexing="ij")
    log_rr = surface(T, Lg) - surface(np.full_like(T, reference_temp), Lg)
    return SurfaceGrid(temps, lags, np.exp(log_rr), float(reference_temp))


def default_grid(exposure) -> tuple[np.ndarray, float]:
    """Whole degrees between the 1st and 99th exposure percentiles, centered on the median."""
    x = exposure.values if isinstance(exposure, DailySeries) else np.asarray(exposure, dtype=float)
    x = x[~np.isnan(x)]
    lo, hi, mid = np.percentile(x, [1, 99, 50])
    grid = np.arange(math.ceil(lo), math.floor(hi) + 1, dtype=float)
    return grid, float(round(mid))
