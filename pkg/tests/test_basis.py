import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from aggresp.basis import (
    CrossBasisSpec,
    DesignMatrix,
    SplineSpec,
    bspline_basis,
    crossbasis,
    default_knots,
    lag_knots_log,
    log_rr_surface,
    natural_time_basis,
    rr_surface,
    time_df,
    trend_basis,
)
from aggresp.errors import ConfigError, DataError


def cox_de_boor_scalar(x, t, i, k):
    """Textbook recursion, one basis function at one point (right-closed last interval)."""
    if k == 0:
        if t[i] <= x < t[i + 1]:
            return 1.0
        if x == t[-1] and t[i] < t[i + 1] == t[-1]:
            return 1.0
        return 0.0
    left = 0.0 if t[i + k] == t[i] else (x - t[i]) / (t[i + k] - t[i]) * cox_de_boor_scalar(x, t, i, k - 1)
    right = 0.0
    if t[i + k + 1] != t[i + 1]:
        right = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * cox_de_boor_scalar(x, t, i + 1, k - 1)
    return left + right


def random_spec(rng, degree=3):
    k = int(rng.integers(0, 6))
    lo, hi = np.sort(rng.uniform(-10, 10, 2))
    hi += 0.5
    knots = np.sort(rng.uniform(lo, hi, k))
    while k and (np.diff(np.concatenate([[lo], knots, [hi]])) < 1e-3).any():
        knots = np.sort(rng.uniform(lo, hi, k))
    return SplineSpec(tuple(knots), (lo, hi), degree)


def test_degree_zero_no_knots():
    B = bspline_basis(np.linspace(0, 1, 11), SplineSpec((), (0, 1), 0))
    assert B.shape == (11, 1) and np.all(B == 1)


def test_matches_scalar_recursion_at_knot():
    spec = SplineSpec((0.5,), (0.0, 1.0), 3)
    t = spec.knot_vector()
    row = bspline_basis([0.5], spec)[0]
    expected = [cox_de_boor_scalar(0.5, t, i, 3) for i in range(spec.n_basis)]
    assert np.allclose(row, expected, atol=1e-14)


def test_matches_scalar_recursion_random(rng):
    for _ in range(10):
        spec = random_spec(rng, int(rng.integers(0, 4)))
        t = spec.knot_vector()
        x = np.concatenate([rng.uniform(*spec.boundary_knots, 15), spec.boundary_knots])
        B = bspline_basis(x, spec)
        ref = np.array([[cox_de_boor_scalar(xi, t, i, spec.degree) for i in range(spec.n_basis)] for xi in x])
        assert np.allclose(B, ref, atol=1e-12)


def test_matches_scipy_design_matrix(rng):
    spec = random_spec(rng)
    x = rng.uniform(*spec.boundary_knots, 200)
    ref = BSpline.design_matrix(x, spec.knot_vector(), 3).toarray()
    assert np.allclose(bspline_basis(x, spec), ref, atol=1e-12)


def test_partition_of_unity_suite(rng):
    for _ in range(20):
        spec = random_spec(rng)
        x = rng.uniform(*spec.boundary_knots, 1000)
        assert np.max(np.abs(bspline_basis(x, spec).sum(axis=1) - 1)) <= 1e-10


def test_local_support(rng):
    spec = random_spec(rng)
    t = spec.knot_vector()
    x = rng.uniform(*spec.boundary_knots, 500)
    B = bspline_basis(x, spec)
    for j in range(spec.n_basis):
        outside = (x < t[j]) | (x > t[j + spec.degree + 1])
        assert np.all(B[outside, j] == 0)


def test_outside_boundary_rejected():
    with pytest.raises(DataError):
        bspline_basis([1.5], SplineSpec((0.5,), (0.0, 1.0)))


@pytest.mark.parametrize("knots,bounds,kw", [
    ((0.5, 0.5), (0, 1), {}), ((1.0,), (0, 1), {}), ((), (1, 0), {}), ((0.5,), (0, 1), {"degree": 2, "natural": True}),
])
def test_spec_validation(knots, bounds, kw):
    with pytest.raises(ConfigError):
        SplineSpec(knots, bounds, **kw)


def esl_natural_basis(x, knots):
    """Truncated-power natural cubic spline basis (intercept, x, K-2 cubic terms)."""
    K = len(knots)

    def d(k):
        return (np.maximum(x - knots[k], 0) ** 3 - np.maximum(x - knots[K - 1], 0) ** 3) / (knots[K - 1] - knots[k])

    cols = [np.ones_like(x), x] + [d(k) - d(K - 2) for k in range(K - 2)]
    return np.column_stack(cols)


def test_natural_basis_spans_truncated_power_space(rng):
    for _ in range(5):
        spec0 = random_spec(rng)
        spec = SplineSpec(spec0.interior_knots, spec0.boundary_knots, 3, natural=True)
        lo, hi = spec.boundary_knots
        x = np.linspace(lo - 2, hi + 2, 400)
        ours = np.column_stack([np.ones_like(x), bspline_basis(x, spec)])
        ref = esl_natural_basis(x, np.array((lo,) + spec.interior_knots + (hi,)))
        assert ours.shape[1] == ref.shape[1] == len(spec.interior_knots) + 2
        for A, B in ((ours, ref), (ref, ours)):
            coef, *_ = np.linalg.lstsq(A, B, rcond=None)
            assert np.max(np.abs(A @ coef - B)) < 1e-6 * max(1.0, np.max(np.abs(B)))


def test_natural_basis_properties():
    spec = SplineSpec((2.0, 5.0), (0.0, 10.0), 3, natural=True)
    B0 = bspline_basis([0.0], spec)
    assert np.allclose(B0, 0, atol=1e-14)
    x = np.array([-3.0, -2.0, -1.0, 11.0, 12.0, 13.0])
    B = bspline_basis(x, spec)
    assert np.allclose(B[2] - B[1], B[1] - B[0]) and np.allclose(B[5] - B[4], B[4] - B[3])
    t = np.linspace(0, 10, 50)
    Bt = np.column_stack([np.ones(50), bspline_basis(t, spec)])
    coef, *_ = np.linalg.lstsq(Bt, 3 * t - 2, rcond=None)
    assert np.max(np.abs(Bt @ coef - (3 * t - 2))) < 1e-6


def test_natural_time_basis_sizes():
    assert natural_time_basis(3653, 8).shape == (3653, 80)
    assert natural_time_basis(365, 8).shape == (365, 8)
    assert time_df(365, 8) == 8
    with pytest.raises(ConfigError):
        natural_time_basis(30, 8)


def test_natural_time_basis_spans_linear():
    n = 1000
    X = np.column_stack([np.ones(n), natural_time_basis(n, 4)])
    t = np.arange(n, dtype=float)
    coef, *_ = np.linalg.lstsq(X, t, rcond=None)
    assert np.max(np.abs(X @ coef - t)) < 1e-6


def test_trend_basis_full_mask_matches_time_basis():
    assert np.allclose(trend_basis(800, np.ones(800, bool), 6), natural_time_basis(800, 6))


def test_default_knots():
    assert np.allclose(default_knots(np.arange(1.0, 101.0)), [10.9, 75.25, 90.1])
    assert default_knots([1.0, 2.0, 3.0] * 4, (50,))[0] == 2.0
    k = default_knots(np.full(20, 4.0))
    with pytest.raises(ConfigError):
        SplineSpec(tuple(k), (3.0, 5.0))
    with pytest.raises(ConfigError):
        default_knots(np.arange(20.0), (50, 10))
    with pytest.raises(DataError):
        default_knots(np.arange(5.0))


def test_lag_knots_log():
    k = lag_knots_log(21, 3)
    assert np.allclose(k, [21 ** 0.25, 21 ** 0.5, 21 ** 0.75], rtol=1e-14)
    assert np.allclose(k, [2.14, 4.58, 9.80], atol=0.011)
    assert np.allclose(lag_knots_log(100, 1), [10.0])
    assert np.all(lag_knots_log(1, 3) == 1.0)


def _toy_spec(L=3):
    pred = SplineSpec((0.0,), (-3.0, 3.0), 1)
    lag = SplineSpec((), (0.0, float(L)), 1)
    return CrossBasisSpec(pred, lag, L, predictor_intercept=True)


def test_crossbasis_constant_bases():
    spec = CrossBasisSpec(SplineSpec((), (-5.0, 5.0), 0), None, 2, predictor_intercept=True)
    cb = crossbasis(np.random.default_rng(1).uniform(-5, 5, 10), spec)
    assert cb.values.shape == (10, 1)
    assert np.all(cb.values[2:] == 3.0) and not cb.row_valid[:2].any()


def test_crossbasis_brute_force(rng):
    spec = _toy_spec()
    x = rng.uniform(-3, 3, 30)
    cb = crossbasis(x, spec)
    B = bspline_basis(x, spec.predictor)
    C = bspline_basis(np.arange(4.0), spec.lag)
    assert cb.values.shape == (30, 3 * 2)
    for t in range(3, 30):
        for j in range(3):
            for k in range(2):
                ref = sum(B[t - l, j] * C[l, k] for l in range(4))
                assert abs(cb.values[t, j * 2 + k] - ref) <= 1e-10


def test_crossbasis_no_lag():
    pred = SplineSpec((0.0,), (-3.0, 3.0), 3)
    spec = CrossBasisSpec(pred, None, 0)
    x = np.linspace(-3, 3, 12)
    cb = crossbasis(x, spec)
    assert np.allclose(cb.values, bspline_basis(x, pred)[:, 1:])
    assert cb.row_valid.all()


def test_crossbasis_missing_rows():
    x = np.linspace(-2, 2, 20)
    x[10] = np.nan
    cb = crossbasis(x, _toy_spec(2))
    assert not cb.row_valid[[0, 1, 10, 11, 12]].any()
    assert cb.row_valid[[2, 9, 13, 19]].all()


def test_crossbasis_spec_checks():
    with pytest.raises(ConfigError):
        CrossBasisSpec(SplineSpec((), (0.0, 1.0), 3), SplineSpec((), (0.0, 5.0), 1), 4)
    with pytest.raises(DataError):
        crossbasis(np.ones(3), _toy_spec(3))


def test_rr_surface_anchor_and_zero(rng):
    spec = CrossBasisSpec(SplineSpec((0.0, 1.0), (-3.0, 3.0)), SplineSpec((2.0,), (0.0, 7.0)), 7)
    beta = rng.standard_normal(spec.n_columns)
    grid = np.linspace(-3, 3, 13)
    s = rr_surface(beta, spec, grid, 0.5)
    assert s.rr.shape == (13, 8) and np.all(s.rr > 0)
    ref = rr_surface(beta, spec, [0.5], 0.5)
    assert np.max(np.abs(ref.rr - 1)) <= 1e-10
    assert np.all(rr_surface(np.zeros(spec.n_columns), spec, grid, 0.5).rr == 1.0)
    doubled = log_rr_surface(2 * beta, spec, grid, 0.5)
    assert np.allclose(doubled, 2 * np.log(s.rr))
    with pytest.raises(ConfigError):
        rr_surface(beta[:-1], spec, grid, 0.5)
    rows = list(s.rows())
    assert rows[0][:2] == (-3.0, 0) and rows[1][:2] == (-3.0, 1) and len(rows) == 13 * 8


def test_rr_surface_by_hand():
    # degree-1 predictor basis with intercept dropped: B(x) = x on [0, 1]; constant lag basis
    spec = CrossBasisSpec(SplineSpec((), (0.0, 1.0), 1), None, 0)
    s = rr_surface([2.0], spec, [0.75], 0.5)
    # exponent = beta * (B(0.75) - B(0.5)) * C = 2 * 0.25 * 1
    assert np.isclose(s.rr[0, 0], np.exp(0.5))
    # beta = 1 per unit of a lag function equal to 2 is beta = 2 on the constant lag basis
    s2 = rr_surface([2.0], spec, [1.0], 0.5)
    assert np.isclose(s2.rr[0, 0], np.e)


def test_design_matrix():
    d = DesignMatrix.from_columns({"a": np.ones(3), "b": np.array([1.0, np.nan, 3.0])})
    assert d.row_valid.tolist() == [True, False, True]
    with pytest.raises(ConfigError):
        DesignMatrix(np.ones((3, 2)), ("a", "a"), np.ones(3, bool))
    e = d.hstack(DesignMatrix.from_columns({"c": np.arange(3.0)}))
    assert e.names == ("a", "b", "c") and e.column_index("c").tolist() == [2]


@given(st.integers(0, 2**31), st.integers(1, 3))
def test_partition_of_unity_property(seed, degree):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, degree)
    x = rng.uniform(*spec.boundary_knots, 50)
    assert np.allclose(bspline_basis(x, spec).sum(axis=1), 1, atol=1e-10)
