import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aggresp.basis import natural_time_basis
from aggresp.errors import DataError
from aggresp.series import (
    DailySeries,
    align,
    day_of_week_indicators,
    detrend,
    load_series,
    longest_run,
    runs,
    series_rows,
)

from conftest import write_csv


def test_load_fills_gaps(tmp_path):
    p = write_csv(tmp_path / "s.csv", [("2000-01-01", 5), ("2000-01-03", 7)])
    s = load_series(p)
    assert len(s) == 3
    assert s.values[0] == 5 and s.values[2] == 7
    assert s.missing_mask.tolist() == [False, True, False]


def test_load_single_row(tmp_path):
    s = load_series(write_csv(tmp_path / "s.csv", [("2000-01-01", 1)]))
    assert len(s) == 1 and s.values[0] == 1.0


def test_load_rejects_duplicates(tmp_path):
    p = write_csv(tmp_path / "s.csv", [("2000-01-01", 1), ("2000-01-01", 2)])
    with pytest.raises(DataError, match="duplicate date"):
        load_series(p)


def test_load_rejects_bad_date(tmp_path):
    p = write_csv(tmp_path / "s.csv", [("01/02/2000", 1)])
    with pytest.raises(DataError, match="unparseable date"):
        load_series(p)


def test_load_custom_columns_and_missing_tokens(tmp_path):
    p = write_csv(tmp_path / "s.csv", [("2000-01-02", "NA", 3), ("2000-01-01", "4.5", 9)],
                  header=("day", "deaths", "other"))
    s = load_series(p, date_column="day", value_column="deaths")
    assert s.start_date == dt.date(2000, 1, 1)
    assert s.values[0] == 4.5 and s.missing_mask[1]


def test_round_trip_is_bit_exact(tmp_path, rng):
    vals = rng.standard_normal(20) * 1e3
    vals[[3, 7]] = np.nan
    s = DailySeries.from_values(vals, "2001-02-27")
    p = tmp_path / "s.csv"
    write_csv(p, list(series_rows(s, include_missing=False)))
    back = load_series(p)
    assert back == s
    assert np.array_equal(back.values, s.values, equal_nan=True)


def test_series_is_immutable():
    s = DailySeries.from_values([1.0, 2.0])
    with pytest.raises(ValueError):
        s.values[0] = 3.0


def test_align_intersection():
    a = DailySeries.from_values(np.arange(10.0), "2000-01-01")
    b = DailySeries.from_values(np.arange(11.0), "2000-01-05")
    d = align(a, b)
    assert d.response.start_date == dt.date(2000, 1, 5) and len(d) == 6
    assert d.response.values.tolist() == [4, 5, 6, 7, 8, 9]
    assert d.exposure.values.tolist() == [0, 1, 2, 3, 4, 5]


def test_align_identity_and_disjoint():
    a = DailySeries.from_values(np.arange(5.0))
    d = align(a, a)
    assert d.response == a and d.exposure == a
    with pytest.raises(DataError):
        align(a, DailySeries.from_values(np.arange(5.0), "2001-01-01"))


def test_detrend_linear_and_constant():
    t = np.arange(800.0)
    r = detrend(DailySeries.from_values(2 * t), 4)
    assert np.max(np.abs(r.values)) <= 1e-6 * np.max(2 * t)
    c = detrend(DailySeries.from_values(np.full(400, 3.5)), 8)
    assert np.all(c.values == 0)


def test_detrend_sinusoid_matches_normal_equations():
    n = 4 * 365 + 1
    t = np.arange(n)
    y = np.sin(2 * np.pi * t / 365.25)
    r = detrend(DailySeries.from_values(y), 8).values
    assert np.var(r) < 0.05 * np.var(y)
    # independent solve of the same least-squares problem
    X = np.column_stack([np.ones(n), natural_time_basis(n, 8)])
    coef = np.linalg.solve(X.T @ X, X.T @ y)
    assert np.allclose(r, y - X @ coef, atol=1e-8)


def test_detrend_keeps_missing_and_centers():
    rng = np.random.default_rng(3)
    y = rng.standard_normal(1000) + 5
    y[[10, 500]] = np.nan
    r = detrend(DailySeries.from_values(y), 4)
    assert np.isnan(r.values[[10, 500]]).all()
    assert abs(np.nanmean(r.values)) < 1e-8 * np.nanstd(y)


def test_detrend_idempotent():
    rng = np.random.default_rng(4)
    y = np.cumsum(rng.standard_normal(900))
    once = detrend(DailySeries.from_values(y), 6)
    twice = detrend(once, 6)
    scale = np.max(np.abs(once.values))
    assert np.max(np.abs(twice.values - once.values)) <= 1e-6 * scale


def test_detrend_insufficient_df():
    with pytest.raises(DataError):
        detrend(DailySeries.from_values(np.arange(30.0)), 8)


def test_day_of_week():
    s = DailySeries.from_values(np.zeros(14), "2024-01-01")  # a Monday
    D = day_of_week_indicators(s)
    assert D.shape == (14, 6)
    assert np.all(D[0] == 0)
    assert D[6].sum() == 1 and D[6, 5] == 1  # Sunday
    assert np.all(D.sum(axis=0) == 2)
    assert set(D.sum(axis=1).tolist()) <= {0.0, 1.0}


@given(st.lists(st.booleans(), max_size=60))
def test_runs_cover_true_entries(mask):
    mask = np.array(mask, dtype=bool)
    covered = np.zeros(mask.size, dtype=bool)
    for a, b in runs(mask):
        assert b > a
        covered[a:b] = True
    assert np.array_equal(covered, mask)
    a, b = longest_run(mask)
    assert b - a == max([y - x for x, y in runs(mask)], default=0)
