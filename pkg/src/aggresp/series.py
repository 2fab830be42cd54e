"""Daily series container, CSV ingestion and calendar covariates.

Every quantity in the package (raw response, exposure, aggregated response,
regression residuals) lives on a contiguous daily index.  Missing days are
kept in place and flagged rather than dropped, so that index ``t`` is always
``start_date + t`` days.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

_MISSING_TOKENS = {"", "na", "nan", "null"}


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DailySeries:
    """Real-valued series on consecutive calendar days.

    ``values`` holds NaN wherever ``missing_mask`` is set; both arrays are
    read-only so a series can be shared freely.
    """

    start_date: dt.date
    values: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.missing_mask, dtype=bool)
        if values.ndim != 1 or mask.shape != values.shape:
            raise DataError("values and missing_mask must be 1-d arrays of equal length")
        if values.size < 1:
            raise DataError("a series needs at least one day")
        mask = mask | np.isnan(values)
        values[mask] = np.nan
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "missing_mask", _frozen(mask))

    @classmethod
    def from_values(cls, values, start_date: dt.date | str = "2000-01-01") -> "DailySeries":
        """Build a series from an array where NaN marks missing days."""
        if isinstance(start_date, str):
            start_date = dt.date.fromisoformat(start_date)
        values = np.asarray(values, dtype=float)
        return cls(start_date, values, np.isnan(values))

    def __len__(self) -> int:
        return self.values.size

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self) - 1)

    @property
    def valid(self) -> np.ndarray:
        return ~self.missing_mask

    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(len(self))]

    def with_values(self, values) -> "DailySeries":
        """Same dates, new values (NaN = missing)."""
        return DailySeries.from_values(values, self.start_date)

    def slice(self, start: int, stop: int) -> "DailySeries":
        return DailySeries(
            self.start_date + dt.timedelta(days=start),
            self.values[start:stop].copy(),
            self.missing_mask[start:stop].copy(),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, DailySeries):
            return NotImplemented
        return (
            self.start_date == other.start_date
            and np.array_equal(self.missing_mask, other.missing_mask)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True)
class Dataset:
    response: DailySeries
    exposure: DailySeries
    label: str = ""

    def __post_init__(self):
        if (self.response.start_date != self.exposure.start_date
                or len(self.response) != len(self.exposure)):
            raise DataError("response and exposure must cover the same dates; use align()")

    def __len__(self) -> int:
        return len(self.response)


def load_series(path, date_column: str = "date", value_column: str = "value") -> DailySeries:
    """Read a daily CSV; absent days become missing, duplicated days are rejected."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise DataError(f"{path}: empty file")
            for col in (date_column, value_column):
                if col not in reader.fieldnames:
                    raise DataError(f"{path}: missing column {col!r}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                raw_date = (row[date_column] or "").strip()
                try:
                    day = dt.date.fromisoformat(raw_date)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: unparseable date {raw_date!r}") from None
                raw_value = (row[value_column] or "").strip()
                if raw_value.lower() in _MISSING_TOKENS:
                    value = math.nan
                else:
                    try:
                        value = float(raw_value)
                    except ValueError:
                        raise DataError(f"{path}:{lineno}: unparseable value {raw_value!r}") from None
                rows.append((day, value))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if not rows:
        raise DataError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for (d0, _), (d1, _) in zip(rows, rows[1:]):
        if d0 == d1:
            raise DataError(f"{path}: duplicate date {d0.isoformat()}")

    start = rows[0][0]
    n = (rows[-1][0] - start).days + 1
    values = np.full(n, np.nan)
    for day, value in rows:
        values[(day - start).days] = value
    return DailySeries(start, values, np.isnan(values))


def series_rows(series: DailySeries, include_missing: bool = True):
    """Yield ``(iso_date, value_text)`` pairs; missing values are empty strings."""
    for i, day in enumerate(series.dates()):
        if series.missing_mask[i]:
            if include_missing:
                yield day.isoformat(), ""
        else:
            yield day.isoformat(), repr(float(series.values[i]))


def align(a: DailySeries, b: DailySeries, label: str = "") -> Dataset:
    """Truncate both series to their common date range."""
    start = max(a.start_date, b.start_date)
    end = min(a.end_date, b.end_date)
    if end < start:
        raise DataError(
            f"date ranges do not overlap ({a.start_date}..{a.end_date} vs {b.start_date}..{b.end_date})"
        )

    def cut(s: DailySeries) -> DailySeries:
        i0 = (start - s.start_date).days
        return s.slice(i0, i0 + (end - start).days + 1)

    return Dataset(cut(a), cut(b), label)


def detrend(series: DailySeries, df_per_year: float = 8.0) -> DailySeries:
    """Residuals of a least-squares natural-spline-in-time fit (plus intercept)."""
    from .basis import time_df

    values = series.values
    ok = series.valid
    if ok.sum() < 2:
        raise DataError("detrend needs at least two non-missing values")
    days = np.nonzero(ok)[0]
    if time_df(int(days[-1] - days[0]) + 1, df_per_year) < 2:
        raise DataError(f"{df_per_year} df/year leaves fewer than 2 degrees of freedom")
    trend = fit_trend(values, ok, df_per_year)
    return series.with_values(values - trend)


def fit_trend(values: np.ndarray, fit_mask: np.ndarray, df_per_year: float,
              covariates: np.ndarray | None = None) -> np.ndarray:
    """Least-squares time trend fitted on ``fit_mask`` rows, evaluated everywhere.

    The spline lives on the span of the fitted rows; rows inside a hole of
    ``fit_mask`` are interpolated and rows beyond it extrapolated linearly.
    ``covariates`` are fitted jointly and partialled out, so signal they
    explain does not leak into the trend; only the trend part is returned.
    """
    from .basis import time_df, trend_basis

    values = np.asarray(values, dtype=float)
    fit_mask = np.asarray(fit_mask, dtype=bool) & ~np.isnan(values)
    if covariates is not None:
        covariates = np.asarray(covariates, dtype=float).reshape(values.size, -1)
        fit_mask &= ~np.isnan(covariates).any(axis=1)
    y = values[fit_mask]
    scale = float(np.std(y)) if y.size else 0.0
    if scale == 0.0:
        return np.full(values.shape, y[0] if y.size else 0.0)
    days = np.nonzero(fit_mask)[0]
    cols = [np.ones((values.size, 1))]
    if df_per_year > 0 and time_df(int(days[-1] - days[0]) + 1, df_per_year) >= 2:
        cols.append(trend_basis(values.size, fit_mask, df_per_year))
    n_trend = sum(c.shape[1] for c in cols)
    if covariates is not None and covariates.shape[1]:
        cols.append(covariates)
    design = np.hstack(cols)
    coef, *_ = np.linalg.lstsq(design[fit_mask], y, rcond=None)
    return design[:, :n_trend] @ coef[:n_trend]


def day_of_week_indicators(series: DailySeries) -> np.ndarray:
    """Treatment-coded weekday dummies, Monday is the reference level.

    Column ``j`` flags Tuesday (j=0) through Sunday (j=5).
    """
    first = series.start_date.weekday()
    weekday = (first + np.arange(len(series))) % 7
    out = np.zeros((len(series), 6))
    rows = np.nonzero(weekday > 0)[0]
    out[rows, weekday[rows] - 1] = 1.0
    return out


def day_of_week_names() -> list[str]:
    return ["dow_tue", "dow_wed", "dow_thu", "dow_fri", "dow_sat", "dow_sun"]


def runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open ``(start, stop)`` intervals of consecutive True entries."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        return []
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.nonzero(edges == 1)[0]
    stops = np.nonzero(edges == -1)[0]
    return list(zip(starts.tolist(), stops.tolist()))


def longest_run(mask: np.ndarray) -> tuple[int, int]:
    """Longest block of consecutive True entries; earliest wins ties."""
    best = (0, 0)
    for start, stop in runs(mask):
        if stop - start > best[1] - best[0]:
            best = (start, stop)
    return best


def as_array(x: DailySeries | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(x, DailySeries):
        return x.values
    return np.asarray(x, dtype=float)
