import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adfvol.heston import (GATHERAL_ANNUAL, HestonParams, annualize, gatheral_daily, sim_dates,
                           simulate, simulate_many)

# published daily values, rounded to four significant digits
ROUNDED_DAILY = dict(kappa=0.0109, theta=1.389e-4, xi=1.687e-3, rho=-0.4644)


def test_gatheral_daily_matches_printed_values():
    p = gatheral_daily()
    for k, v in ROUNDED_DAILY.items():
        assert getattr(p, k) == pytest.approx(v, rel=5e-3)
    assert p.mu == pytest.approx(GATHERAL_ANNUAL["mu"] / 252)
    assert p.feller


@pytest.mark.parametrize("bad", [
    dict(kappa=0.0), dict(theta=-1e-4), dict(xi=0.0), dict(rho=1.01), dict(h=0.0),
    dict(kappa=1.0), dict(kappa=float("nan")),
])
def test_invalid_params(bad):
    kw = dict(ROUNDED_DAILY, **bad)
    with pytest.raises(ValueError):
        HestonParams(**kw)


def test_feller_recorded_not_enforced():
    p = HestonParams(kappa=0.01, theta=1e-4, xi=0.01, rho=0.0)
    assert not p.feller


def test_annualize_reference_values():
    a = annualize(HestonParams(kappa=0.07908, theta=4.123e-5, xi=5.105e-3, rho=-0.7, mu=1e-4))
    assert a["kappa"] == pytest.approx(19.93, abs=0.005)
    assert a["xi"] == pytest.approx(1.29, abs=0.005)
    assert a["theta"] == pytest.approx(0.0104, abs=0.00005)
    assert a["rho"] == -0.7
    assert a["mu"] == pytest.approx(0.0252)


def test_fixed_point_without_noise():
    p = HestonParams(kappa=0.02, theta=2e-4, xi=1e-300, rho=0.0)
    path = simulate(p, 300, nu0=p.theta, seed=3)
    np.testing.assert_allclose(path.variances, p.theta, rtol=1e-12)


def test_perfect_correlation_makes_variance_a_function_of_returns():
    p = HestonParams(kappa=0.02, theta=2e-4, xi=1e-3, rho=1.0, mu=1e-4)
    path = simulate(p, 500, seed=5)
    nu = np.empty(501)
    nu[0] = p.theta
    for t, y in enumerate(path.returns):
        nu[t + 1] = max(0.0, nu[t] + p.kappa * (p.theta - nu[t]) + p.xi * (y - p.mu))
    np.testing.assert_allclose(path.variances, nu, rtol=1e-12, atol=1e-18)


def test_shapes_and_identities():
    p = gatheral_daily()
    path = simulate(p, 100, x0=4.6, seed=1)
    assert path.log_prices.shape == path.variances.shape == (101,)
    assert path.log_prices[0] == 4.6 and path.variances[0] == p.theta
    np.testing.assert_array_equal(path.returns, np.diff(path.log_prices))
    np.testing.assert_array_equal(path.latent_vol, np.sqrt(path.variances[1:]))
    assert np.all(path.variances >= 0)


def test_same_seed_bit_identical():
    p = gatheral_daily()
    a, b = simulate(p, 1000, seed=42), simulate(p, 1000, seed=42)
    assert a.log_prices.tobytes() == b.log_prices.tobytes()
    assert a.variances.tobytes() == b.variances.tobytes()
    assert not np.array_equal(a.returns, simulate(p, 1000, seed=43).returns)


def test_input_errors():
    p = gatheral_daily()
    with pytest.raises(ValueError):
        simulate(p, 0)
    with pytest.raises(ValueError):
        simulate(p, 10, nu0=-1e-4)


def test_monte_carlo_mean_matches_closed_form():
    # E[nu_n] = theta + (nu0 - theta)(1 - kappa h)^n ignoring the rare truncations
    p = HestonParams(**ROUNDED_DAILY)
    n, m = 250, 100_000
    for nu0 in (p.theta, 3 * p.theta):
        _, nu, _ = simulate_many(p, n, m, nu0=nu0, seed=2024)
        end = nu[-1]
        expected = p.theta + (nu0 - p.theta) * (1 - p.kappa) ** n
        se = end.std(ddof=1) / math.sqrt(m)
        assert abs(end.mean() - expected) < 3 * se


def test_truncation_rate_small_under_feller():
    p = gatheral_daily()
    clipped = sum(simulate(p, 2500, seed=s).truncation_count for s in range(100))
    assert clipped / (100 * 2500) < 0.05


def test_innovation_correlation_recovers_rho():
    p = gatheral_daily()
    n = 200_000
    path = simulate(p, n, seed=7)
    nu = path.variances
    eps = path.returns - p.mu
    dnu = nu[1:] - nu[:-1] - p.kappa * (p.theta - nu[:-1])
    ok = nu[1:] > 0
    r = np.corrcoef(eps[ok], dnu[ok])[0, 1]
    se = (1 - p.rho ** 2) / math.sqrt(ok.sum())
    assert abs(r - p.rho) < 3 * se


@given(st.integers(0, 2**32 - 1), st.integers(1, 50))
def test_variances_nonnegative(seed, n):
    p = HestonParams(kappa=0.05, theta=1e-4, xi=0.01, rho=-0.9)  # Feller violated on purpose
    path = simulate(p, n, seed=seed)
    assert np.all(path.variances >= 0)
    assert 0 <= path.truncation_count <= n


def test_sim_dates_are_business_days():
    d = sim_dates(10)
    assert d[0] == np.datetime64("2000-01-03")
    assert np.all(np.is_busday(d))
    assert np.all(np.diff(d).astype(int) > 0)
