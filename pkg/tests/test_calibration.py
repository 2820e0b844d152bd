import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adfvol.calibration import (CalibrationConfig, CalibrationError, adf_loss, calibrate,
                                evaluate, filter_predictions, heston_implied_adf_coeffs,
                                mean_q, pdv_implied_heston, r_squared)
from adfvol.heston import HestonParams, gatheral_daily, simulate


# R^2 ----------------------------------------------------------------------------

def test_r_squared_examples():
    a = np.array([1.0, 2.0, 3.0])
    assert r_squared(a, a) == 1.0
    assert r_squared(np.full(3, 2.0), a) == 0.0
    assert r_squared(np.array([1.0, 2.0, 4.0]), a) == pytest.approx(0.5)


def test_r_squared_errors():
    with pytest.raises(ValueError, match="constant"):
        r_squared([1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        r_squared([1.0, 2.0], [1.0, 2.0, 3.0])


# loss ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sim():
    p = gatheral_daily()
    return p, simulate(p, 1500, seed=21)


def test_self_target_has_zero_loss(sim):
    p, path = sim
    tgt = filter_predictions(p, path.returns)
    assert adf_loss(p, path.returns, tgt) == pytest.approx(0.0, abs=1e-25)
    cfg = CalibrationConfig(loss_space="variance")
    assert adf_loss(p, path.returns, tgt, cfg) == pytest.approx(0.0, abs=1e-30)


def test_loss_spaces_share_noiseless_argmin(sim):
    p, path = sim
    tgt = filter_predictions(p, path.returns)
    for cfg in (CalibrationConfig(), CalibrationConfig(loss_space="variance")):
        at_truth = adf_loss(p, path.returns, tgt, cfg)
        for k in ("kappa", "theta", "xi"):
            for f in (0.9, 1.1):
                moved = p.replace(**{k: getattr(p, k) * f})
                assert adf_loss(moved, path.returns, tgt, cfg) > at_truth
        assert adf_loss(p.replace(rho=p.rho + 0.05), path.returns, tgt, cfg) > at_truth


def test_loss_infinite_on_filter_failure(sim):
    p, path = sim
    y = path.returns.copy()
    y[10] = np.inf
    assert adf_loss(p, y, np.full(y.size, 0.01), CalibrationConfig(mu=0.0, sigma0=0.01)) == math.inf


def test_loss_requires_alignment(sim):
    p, path = sim
    with pytest.raises(ValueError):
        adf_loss(p, path.returns, path.latent_vol[:-1])


# calibration --------------------------------------------------------------------

@pytest.mark.parametrize("truth", [
    gatheral_daily(),
    HestonParams(kappa=0.02, theta=2.5e-4, xi=2.5e-3, rho=-0.7, mu=1e-4),
])
def test_noiseless_self_target_recovery(truth):
    y = simulate(truth, 1500, seed=8).returns
    res = calibrate(y, filter_predictions(truth, y), seed=0)
    p = res.params
    assert p.kappa == pytest.approx(truth.kappa, rel=1e-3)
    assert math.log(p.theta) == pytest.approx(math.log(truth.theta), abs=1e-3)
    assert p.xi == pytest.approx(truth.xi, rel=1e-3)
    assert p.rho == pytest.approx(truth.rho, abs=1e-2)
    assert res.r2_in == pytest.approx(1.0, abs=1e-9)


@pytest.fixture(scope="module")
def fitted(sim):
    p, path = sim
    n = 1000
    cfg = CalibrationConfig(n_starts=4)
    res = calibrate(path.returns[:n], path.latent_vol[:n], cfg, seed=3,
                    oos_returns=path.returns[n:], oos_target=path.latent_vol[n:])
    return res, cfg


def test_calibration_invariants(sim, fitted):
    p, path = sim
    res, cfg = fitted
    box = cfg.resolve(path.returns[:1000])
    for name in ("kappa", "theta", "xi", "rho"):
        lo, hi = getattr(box, f"{name}_bounds")
        assert lo < getattr(res.params, name) < hi
    assert res.loss >= 0
    assert all(res.loss <= f0 for f0 in res.start_losses)
    assert res.loss == pytest.approx(min(res.final_losses))
    assert res.trace[-1] == pytest.approx(res.loss)
    assert len(res.start_losses) == 4 and res.n_evals > 0
    assert res.r2_in <= 1 and res.r2_out is not None and res.r2_out <= 1
    assert res.params.mu == pytest.approx(np.mean(path.returns[:1000]))


def test_calibrated_r2_dominates_truth_in_sample(sim, fitted):
    p, path = sim
    res, _ = fitted
    _, r2_true, _ = evaluate(p, path.returns[:1000], path.latent_vol[:1000])
    assert res.r2_in >= r2_true - 0.02


def test_kappa_probe_around_optimum(sim, fitted):
    p, path = sim
    res, cfg = fitted
    y, t = path.returns[:1000], path.latent_vol[:1000]
    base = adf_loss(res.params, y, t, cfg)
    for f in (0.97, 1.03):
        assert adf_loss(res.params.replace(kappa=res.params.kappa * f), y, t, cfg) > base


def test_calibration_deterministic(sim):
    p, path = sim
    y, t = path.returns[:600], path.latent_vol[:600]
    cfg = CalibrationConfig(n_starts=3)
    a, b = calibrate(y, t, cfg, seed=5), calibrate(y, t, cfg, seed=5)
    assert a.params == b.params and a.trace == b.trace


def test_evaluate_self_target_both_windows(sim):
    p, path = sim
    y = path.returns
    mu, s0 = float(np.mean(y[:900])), float(np.std(y[:20], ddof=1))
    tgt = filter_predictions(p, y, sigma0=s0, mu=mu)
    pred, r2_in, r2_out = evaluate(p, y, tgt, n_in=900)
    assert r2_in == pytest.approx(1.0) and r2_out == pytest.approx(1.0)
    np.testing.assert_array_equal(pred, tgt)


def test_calibrate_input_errors(sim):
    p, path = sim
    with pytest.raises(ValueError):
        calibrate(path.returns, path.latent_vol[:-1])
    y = path.returns.copy()
    y[0] = np.inf
    with pytest.raises(ValueError, match="finite"):
        calibrate(y, path.latent_vol)
    # finite returns whose square overflows make every start fail
    y[0] = 1e160
    cfg = CalibrationConfig(n_starts=2, maxiter=5, mu=0.0, sigma0=0.01,
                            theta_bounds=(1e-6, 1e-3), theta_init=(1e-5, 1e-4),
                            xi_bounds=(1e-5, 1e-1), xi_init=(1e-4, 1e-2))
    with pytest.raises(CalibrationError), np.errstate(over="ignore"):
        calibrate(y, path.latent_vol, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        CalibrationConfig(n_starts=0)
    with pytest.raises(ValueError):
        CalibrationConfig(loss_space="log")
    with pytest.raises(ValueError):
        CalibrationConfig(theta_span=2.0)
    y = np.random.default_rng(0).normal(0, 0.01, 100)
    with pytest.raises(ValueError, match="kappa"):
        CalibrationConfig(kappa_bounds=(1e-4, 1.0)).resolve(y)
    with pytest.raises(ValueError, match="rho"):
        CalibrationConfig(rho_init=(-0.9, 0.9999)).resolve(y)
    box = CalibrationConfig().resolve(y)
    s2 = np.var(y)
    assert box.theta_bounds == pytest.approx((s2 / 100, s2 * 100))


# PDV <-> Heston maps --------------------------------------------------------------

def test_inversion_reproduces_printed_example():
    imp = pdv_implied_heston(2.362e-5, -0.823e-3, 0.0505, 0.9374, 2.4456e-9, h=1.0)
    assert imp.b == pytest.approx(9.8973, rel=5e-3)
    assert imp.q == pytest.approx(8.3973, rel=5e-3)
    assert imp.kappa == pytest.approx(0.01272, rel=5e-3)
    assert imp.theta == pytest.approx(1.2245e-4, rel=5e-3)
    assert imp.xi == pytest.approx(1.094e-3, rel=5e-2)
    assert imp.rho == pytest.approx(-0.7925, rel=5e-2)


def test_inversion_without_leverage():
    imp = pdv_implied_heston(2e-5, 0.0, 0.05, 0.93, 3e-9)
    assert imp.rho == 0.0
    assert imp.xi == pytest.approx(math.sqrt(imp.kappa * (2 - imp.kappa) * 3e-9 / imp.theta))


@pytest.mark.parametrize("args, msg", [
    ((2e-5, -1e-3, 0.0, 0.93, 3e-9), "lambda"),
    ((2e-5, -1e-3, 0.05, 1.0, 3e-9), "decay"),
    ((2e-5, -1e-3, 0.05, 0.93, 0.0), "s2"),
    ((2e-5, -1e-3, 0.5, 0.93, 3e-9), "Q"),
    ((2e-5, -1e-3, 0.05, 0.99, 3e-9), "kappa"),
])
def test_inversion_errors(args, msg):
    with pytest.raises(ValueError, match=msg):
        pdv_implied_heston(*args)


@given(st.floats(-1.0, 1.0), st.floats(1e-15, 1e-6))
def test_inversion_rho_in_range(lb1, s2):
    # xi >= |leverage loading| by construction, so |rho| <= 1 even for tiny s2
    imp = pdv_implied_heston(2e-5, lb1, 0.05, 0.93, s2)
    assert -1 <= imp.rho <= 1


def test_stationary_variance_printed_value():
    eq = heston_implied_adf_coeffs(gatheral_daily(), q_bar=5.0)
    assert f"{eq.s2:.5e}" == "1.42744e-08"
    # the rounded daily values do not reproduce the printed digits
    rounded = HestonParams(kappa=0.0109, theta=1.389e-4, xi=1.687e-3, rho=-0.4644)
    assert f"{heston_implied_adf_coeffs(rounded, 5.0).s2:.5e}" != "1.42744e-08"


def test_degenerate_noiseless_limit():
    p = HestonParams(kappa=0.01, theta=1e-4, xi=1e-300, rho=0.0)
    eq = heston_implied_adf_coeffs(p, 3.0)
    assert eq.s2 == 0.0 and eq.lambda_beta1 == 0.0


def test_forward_map_rows():
    p = gatheral_daily()
    q = 5.416
    eq = heston_implied_adf_coeffs(p, q)
    b = q + 1.5
    assert eq.lambda_beta2 == pytest.approx(1 / (2 * b))
    assert eq.decay == pytest.approx((q + 1) * (1 - p.kappa) / b)
    assert eq.lambda_beta1 == pytest.approx((q + 1) * p.rho * p.xi / b)
    assert eq.beta0 == pytest.approx((q + 1) * p.kappa * p.theta / ((1 - eq.decay) * b))
    with pytest.raises(ValueError):
        heston_implied_adf_coeffs(p, 0.0)


@given(st.floats(1e-4, 0.2), st.floats(1e-6, 1e-2), st.floats(1e-4, 1e-1),
       st.floats(-0.99, 0.99), st.floats(0.05, 50.0))
def test_roundtrip_identity(kappa, theta, xi, rho, q):
    p = HestonParams(kappa=kappa, theta=theta, xi=xi, rho=rho)
    eq = heston_implied_adf_coeffs(p, q)
    imp = pdv_implied_heston(eq.beta0, eq.lambda_beta1, eq.lambda_beta2, eq.decay, eq.s2)
    assert imp.q == pytest.approx(q, rel=1e-10)
    assert imp.kappa == pytest.approx(kappa, rel=1e-10)
    assert imp.theta == pytest.approx(theta, rel=1e-10)
    assert imp.xi == pytest.approx(xi, rel=1e-10)
    assert imp.rho == pytest.approx(rho, rel=1e-10, abs=1e-12)


def test_mean_q_positive(sim):
    p, path = sim
    q = mean_q(p, path.returns)
    assert 1 < q < 20
