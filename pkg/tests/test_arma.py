import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from aggresp.arma import (
    ArmaOrder,
    ArmaParams,
    aic,
    arma_loglik,
    autocovariance,
    bic,
    check_admissible,
    coef_to_pacf,
    fit_arma,
    min_root_modulus,
    pacf_to_coef,
    select_order,
    simulate_arma,
    stepwise_search,
)
from aggresp.errors import ConfigError, DataError

LOG_2PI = math.log(2 * math.pi)


def dense_loglik(y, params):
    n = len(y)
    g = autocovariance(params, n - 1)
    S = g[np.abs(np.subtract.outer(np.arange(n), np.arange(n)))]
    return multivariate_normal(np.zeros(n), S).logpdf(y)


def random_admissible(rng, p, q):
    phi = pacf_to_coef(rng.uniform(-0.9, 0.9, p))
    theta = -pacf_to_coef(rng.uniform(-0.9, 0.9, q))
    return ArmaParams(tuple(phi), tuple(theta), float(rng.uniform(0.3, 3)))


def test_admissibility_examples():
    assert check_admissible(ArmaParams((0.5,), (), 1))
    assert not check_admissible(ArmaParams((1.0,), (), 1))
    assert check_admissible(ArmaParams((0.5, 0.4), (), 1))
    r = np.roots([-0.4, -0.5, 1])
    assert np.all(np.abs(r) > 1)
    assert not check_admissible(ArmaParams((), (-1.0,), 1))


def test_params_validation():
    with pytest.raises(ConfigError):
        ArmaParams((), (), -1.0)
    with pytest.raises(ConfigError):
        ArmaOrder(-1, 0)


def test_autocovariance_examples():
    assert np.allclose(autocovariance(ArmaParams((0.5,), (), 1), 2), [4 / 3, 2 / 3, 1 / 3])
    assert np.allclose(autocovariance(ArmaParams((), (), 2), 3), [2, 0, 0, 0])
    assert np.allclose(autocovariance(ArmaParams((), (0.5,), 1), 2), [1.25, 0.5, 0])
    with pytest.raises(ConfigError):
        autocovariance(ArmaParams((1.2,), (), 1), 2)


def test_autocovariance_matches_psi_sum(rng):
    for _ in range(10):
        par = random_admissible(rng, 2, 2)
        psi = np.zeros(2000)
        psi[0] = 1
        for j in range(1, 2000):
            psi[j] = (par.theta[j - 1] if j <= 2 else 0) + sum(
                par.phi[i] * psi[j - 1 - i] for i in range(2) if j - 1 - i >= 0)
        ref = [par.sigma2 * np.dot(psi[: 2000 - k], psi[k:]) for k in range(5)]
        assert np.allclose(autocovariance(par, 4), ref, atol=1e-8)


def test_likelihood_anchors():
    z = np.zeros(2)
    assert abs(arma_loglik(z, ArmaOrder(0, 0), ArmaParams((), (), 1)) - (-1.837877)) < 1e-6
    assert abs(arma_loglik(z, ArmaOrder(1, 0), ArmaParams((0.5,), (), 1)) - (-1.981718)) < 1e-6
    assert abs(arma_loglik(z, ArmaOrder(0, 1), ArmaParams((), (0.5,), 1)) - (-1.973843)) < 1e-6
    assert abs(arma_loglik(z, ArmaOrder(1, 0), ArmaParams((0.5,), (), 1)) - (-LOG_2PI - 0.5 * math.log(4 / 3))) < 1e-12


def test_likelihood_matches_dense(rng):
    for _ in range(30):
        p, q = rng.integers(0, 3, 2)
        par = random_admissible(rng, p, q)
        y = rng.standard_normal(int(rng.integers(1, 120))) * 2
        assert abs(arma_loglik(y, ArmaOrder(p, q), par) - dense_loglik(y, par)) <= 1e-6


def test_likelihood_inadmissible_sentinel():
    assert arma_loglik(np.zeros(5), ArmaOrder(1, 0), ArmaParams((1.5,), (), 1)) == -math.inf
    with pytest.raises(ConfigError):
        arma_loglik(np.zeros(5), ArmaOrder(2, 0), ArmaParams((0.5,), (), 1))
    with pytest.raises(DataError):
        arma_loglik(np.array([0.0, np.nan]), ArmaOrder(0, 0), ArmaParams((), (), 1))


def test_fit_white_noise_closed_form(rng):
    y = rng.standard_normal(300)
    fit = fit_arma(y, ArmaOrder(0, 0))
    s2 = np.mean(y ** 2)
    assert np.isclose(fit.params.sigma2, s2)
    assert np.isclose(fit.loglik, -150 * (LOG_2PI + math.log(s2) + 1))
    assert np.isclose(aic(fit.loglik, 1), -2 * fit.loglik + 2)


def test_fit_loglik_consistent_and_admissible(rng):
    y = simulate_arma(ArmaOrder(1, 1), ArmaParams((0.7,), (-0.4,), 2.0), 600, seed=5)
    fit = fit_arma(y, ArmaOrder(1, 1))
    assert check_admissible(fit.params)
    assert np.isclose(fit.loglik, arma_loglik(y, ArmaOrder(1, 1), fit.params), atol=1e-9)
    assert abs(fit.params.phi[0] - 0.7) < 0.15


def test_fit_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.tsa.arima.model")
    y = simulate_arma(ArmaOrder(2, 1), ArmaParams((0.5, -0.3), (0.4,), 1.0), 800, seed=11)
    ours = fit_arma(y, ArmaOrder(2, 1))
    ref = sm.ARIMA(y, order=(2, 0, 1), trend="n").fit(method="innovations_mle")
    assert ours.loglik >= ref.llf - 1e-4
    assert np.allclose(np.r_[ours.params.phi, ours.params.theta], ref.params[:3], atol=5e-3)


def test_fit_too_short():
    with pytest.raises(DataError):
        fit_arma(np.zeros(5), ArmaOrder(2, 2))


def test_ar1_recovery_small_batch():
    hits = 0
    for seed in range(20):
        y = simulate_arma(ArmaOrder(1, 0), ArmaParams((0.6,), (), 1.0), 2000, seed)
        hits += abs(fit_arma(y, ArmaOrder(1, 0)).params.phi[0] - 0.6) <= 0.06
    assert hits >= 18


def test_information_criteria():
    assert aic(-100, 3) == 206
    assert aic(0, 0) == 0
    assert bic(-100, 3, 100) == pytest.approx(200 + 3 * math.log(100))
    with pytest.raises(ConfigError):
        aic(0, -1)


@given(st.floats(-1e6, 1e6), st.integers(0, 50))
def test_aic_increasing_in_k(ll, k):
    assert aic(ll, k + 1) > aic(ll, k)


def test_pacf_round_trip(rng):
    for p in range(1, 6):
        r = rng.uniform(-0.95, 0.95, p)
        a = pacf_to_coef(r)
        assert check_admissible(ArmaParams(tuple(a), (), 1))
        assert np.allclose(coef_to_pacf(a), r)
    assert coef_to_pacf([1.2]) is None


def test_stepwise_trace_and_table(rng):
    y = simulate_arma(ArmaOrder(2, 0), ArmaParams((1.2, -0.5), (), 1.0), 1500, seed=2)
    res = stepwise_search(y, 3, 3)
    values = [v for _, v in res.trace]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert res.criterion == min(res.table.values())
    assert res.order.p >= 2
    assert {ArmaOrder(0, 0), ArmaOrder(1, 0), ArmaOrder(0, 1), ArmaOrder(1, 1)} <= set(res.table)


def test_select_order_preconditions():
    with pytest.raises(DataError):
        select_order(np.zeros(50), 5, 5)
    with pytest.raises(ConfigError):
        select_order(np.zeros(500), 1, 1, ic="hqic")


def test_select_order_bounds_respected(rng):
    y = simulate_arma(ArmaOrder(2, 0), ArmaParams((1.2, -0.5), (), 1.0), 1000, seed=8)
    assert select_order(y, 1, 0) == ArmaOrder(1, 0)
    assert select_order(y, 0, 0) == ArmaOrder(0, 0)


def test_stepwise_tie_break():
    calls = []

    class Fake:
        def __init__(self, ll):
            self.loglik = ll
            self.params = ArmaParams((), (), 1.0)

    def fitter(y, order):
        calls.append(order)
        # every model has the same AIC: loglik rises by exactly one per extra parameter
        return Fake(float(order.p + order.q))

    res = stepwise_search(np.zeros(200), 2, 2, fitter=fitter)
    assert res.order == ArmaOrder(0, 0)


def test_min_root_rule():
    near_unit = ArmaParams((0.995,), (), 1.0)
    assert min_root_modulus(near_unit) < 1.01
    assert min_root_modulus(ArmaParams((), (), 1.0)) == math.inf


def test_simulate():
    o, par = ArmaOrder(1, 0), ArmaParams((0.6,), (), 1.0)
    assert np.array_equal(simulate_arma(o, par, 50, 3), simulate_arma(o, par, 50, 3))
    assert not np.array_equal(simulate_arma(o, par, 50, 3), simulate_arma(o, par, 50, 4))
    assert np.all(simulate_arma(o, ArmaParams((0.6,), (), 0.0), 20, 1) == 0)
    y = simulate_arma(o, par, 100000, 7)
    assert abs(np.corrcoef(y[:-1], y[1:])[0, 1] - 0.6) <= 0.01
    with pytest.raises(ConfigError):
        simulate_arma(o, ArmaParams((1.1,), (), 1.0), 10, 1)


def test_simulated_autocovariance_converges():
    par = ArmaParams((0.5, -0.2), (0.3,), 1.5)
    y = simulate_arma(ArmaOrder(2, 1), par, 200000, 9)
    sample = [np.dot(y[: y.size - k], y[k:]) / y.size for k in range(4)]
    assert np.allclose(sample, autocovariance(par, 3), atol=0.05)


@given(st.integers(0, 2**31), st.integers(0, 2), st.integers(0, 2))
def test_fit_never_inadmissible(seed, p, q):
    y = np.random.default_rng(seed).standard_normal(120)
    fit = fit_arma(y, ArmaOrder(p, q))
    assert check_admissible(fit.params)
    assert np.isfinite(fit.loglik)
