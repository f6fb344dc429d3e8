import math

import numpy as np
import pytest

from confma.residual_models import (AllZeroResiduals, ArGarchFit, LogVarianceFit, TooShort,
                                    ar_garch_loglik, ar_garch_standard_errors, fit_ar_garch,
                                    fit_log_variance, garch_variances, simulate_ar_garch,
                                    standardize_cross_section, standardize_time_series,
                                    _START_AB, _starts)


def test_constant_residuals_intercept_only():
    e = np.full(20, 0.7) * np.where(np.arange(20) % 2, 1, -1)
    fit = fit_log_variance(np.ones((20, 1)), e)
    assert fit.gamma[0] == pytest.approx(math.log(0.49), abs=1e-10)


def test_noiseless_recovery():
    rng = np.random.default_rng(0)
    Z = np.column_stack([np.ones(50), rng.standard_normal((50, 2))])
    g = np.array([0.3, -0.5, 1.1])
    e = np.exp(0.5 * Z @ g) * rng.choice([-1, 1], 50)
    np.testing.assert_allclose(fit_log_variance(Z, e).gamma, g, atol=1e-8)


def test_large_n_slope_recovery():
    rng = np.random.default_rng(1)
    n = 10_000
    x = rng.standard_normal(n)
    Z = np.column_stack([np.ones(n), x])
    e = np.exp(0.5 * (0.5 + 0.8 * x)) * rng.standard_normal(n)
    g = fit_log_variance(Z, e).gamma
    # log(eta^2) has variance pi^2 / 2
    se = math.sqrt(math.pi ** 2 / 2 / n)
    assert abs(g[1] - 0.8) < 3 * se
    assert abs(g[0] - (0.5 - 1.2704)) < 3 * se


def test_all_zero_residuals():
    with pytest.raises(AllZeroResiduals):
        fit_log_variance(np.ones((5, 1)), np.zeros(5))


def test_floor_keeps_finite():
    e = np.array([0.0, 1.0, -2.0, 0.5, 0.0])
    g = fit_log_variance(np.ones((5, 1)), e).gamma
    assert np.all(np.isfinite(g))


def test_standardize_cross_section():
    e = np.array([1.0, -2.0, 3.0])
    Z = np.ones((3, 1))
    np.testing.assert_allclose(standardize_cross_section(e, Z, LogVarianceFit(np.zeros(1))), e)
    np.testing.assert_allclose(
        standardize_cross_section(e, Z, LogVarianceFit(np.array([math.log(4)]))), e / 2)
    fit = LogVarianceFit(np.array([0.2]))
    eta = standardize_cross_section(e, Z, fit)
    np.testing.assert_allclose(eta * fit.sigma(Z), e, atol=1e-12)


def test_cross_section_scale_equivariance():
    rng = np.random.default_rng(2)
    Z = np.column_stack([np.ones(10), rng.standard_normal(10)])
    e = rng.standard_normal(10)
    fit = fit_log_variance(Z, e)
    s = 3.7
    fit_s = LogVarianceFit(fit.gamma + np.array([2 * math.log(s), 0.0]))
    np.testing.assert_allclose(standardize_cross_section(s * e, Z, fit_s),
                               standardize_cross_section(e, Z, fit), atol=1e-12)


def test_degenerate_recursions():
    rng = np.random.default_rng(3)
    e = rng.standard_normal(30)
    fit = ArGarchFit(0.0, 0.0, 2.0, 0.0, 0.0)
    eta, s_n, e_n = standardize_time_series(e, fit)
    np.testing.assert_allclose(eta, e[1:] / math.sqrt(2.0))
    assert s_n == pytest.approx(math.sqrt(2.0)) and e_n == e[-1]
    z = rng.standard_normal(30)
    path = np.empty(30)
    path[0] = 0.4
    for i in range(29):
        path[i + 1] = 0.1 + 0.6 * path[i] + math.sqrt(0.5) * z[i + 1]
    eta, _, _ = standardize_time_series(path, ArGarchFit(0.1, 0.6, 0.5, 0.0, 0.0))
    np.testing.assert_allclose(eta, z[1:], atol=1e-12)


def test_recursion_against_loop():
    rng = np.random.default_rng(4)
    e = rng.standard_normal(200)
    c, a, b = 0.1, 0.15, 0.7
    s2 = garch_variances(e, c, a, b)
    prev = c / (1 - a - b)
    for i in range(200):
        prev = c + a * e[i] ** 2 + b * prev
        assert abs(s2[i] - prev) < 1e-12
    assert np.all(s2 >= c)


def test_params_validation():
    with pytest.raises(ValueError):
        ArGarchFit(0, 0, 0.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        ArGarchFit(0, 0, 1.0, 0.5, 0.5)
    with pytest.raises(TooShort):
        fit_ar_garch(np.ones(19))


def test_iid_unconditional_variance():
    rng = np.random.default_rng(5)
    e = 1.5 * rng.standard_normal(5000)
    fit = fit_ar_garch(e)
    assert abs(fit.sigma0_sq / 2.25 - 1) < 0.10
    assert abs(fit.rho) < 0.1 and abs(fit.delta) < 0.1


def test_fit_beats_every_start():
    rng = np.random.default_rng(6)
    true = ArGarchFit(0.0, 0.3, 0.05, 0.10, 0.85)
    e = simulate_ar_garch(true, 400, rng)
    fit = fit_ar_garch(e)
    scale = np.std(e)
    for s in _starts(e / scale):
        p = np.array([s[0] * scale, s[1], s[2] * scale ** 2, s[3], s[4]])
        assert fit.loglik >= ar_garch_loglik(e, p) - 1e-9
    assert fit.alpha_g + fit.beta_g <= 1 - 1e-6
    assert fit.loglik == pytest.approx(ar_garch_loglik(e, fit))
    assert len(_START_AB) == 5


def test_fit_deterministic():
    rng = np.random.default_rng(7)
    e = rng.standard_normal(100)
    assert fit_ar_garch(e) == fit_ar_garch(e)


def test_parameter_recovery():
    true = ArGarchFit(0.0, 0.3, 0.05, 0.10, 0.85)
    e = simulate_ar_garch(true, 20_000, np.random.default_rng(8))
    fit = fit_ar_garch(e)
    se = ar_garch_standard_errors(e, fit)
    z = (fit.params - true.params) / se
    assert np.all(np.abs(z) < 3), z


def test_eta_squared_mean_near_one():
    true = ArGarchFit(0.0, 0.3, 0.05, 0.10, 0.85)
    e = simulate_ar_garch(true, 20_000, np.random.default_rng(9))
    eta, _, _ = standardize_time_series(e, true)
    assert abs(np.mean(eta ** 2) - 1) < 0.10
