"""Residual prewhitening models for locally adaptive intervals.

Exchangeable data use a log-linear variance regression; time series use an
AR(1) mean with GARCH(1,1) variance driven by the lagged residual itself:

    e[i+1] = delta + rho * e[i] + sigma[i] * eta[i+1]
    sigma[i]^2 = c + a * e[i]^2 + b * sigma[i-1]^2,   sigma[0]^2 = c / (1 - a - b)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal

from .core import ConfmaError, DimensionMismatch
from .linalg import lstsq_min_norm

STATIONARITY_MARGIN = 1e-6
MIN_GARCH_LENGTH = 20


class AllZeroResiduals(ConfmaError, ValueError):
    pass


class TooShort(ConfmaError, ValueError):
    pass


class OptimFailure(ConfmaError, RuntimeError):
    pass


# ---------------------------------------------------------------------------
# exchangeable case


@dataclass(frozen=True)
class LogVarianceFit:
    gamma: np.ndarray
    covariate_columns: tuple[int, ...] | None = None

    def log_variance(self, X_var) -> np.ndarray:
        return np.asarray(X_var, dtype=float) @ self.gamma

    def sigma(self, X_var) -> np.ndarray:
        return np.exp(0.5 * self.log_variance(X_var))


def log_residual_squares(residuals) -> np.ndarray:
    """``log(e^2)`` with ``e^2`` floored at 1e-12 * median(e^2).

    Works column-wise on a 2-D array (one residual vector per column).
    """
    e2 = np.square(np.asarray(residuals, dtype=float))
    med = np.median(e2, axis=0)
    floor = np.where(med > 0, 1e-12 * med, 1e-300)
    return np.log(np.maximum(e2, floor))


def fit_log_variance(X_var, residuals, covariate_columns=None) -> LogVarianceFit:
    X_var = np.asarray(X_var, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if X_var.ndim == 1:
        X_var = X_var[:, None]
    if X_var.shape[0] != residuals.shape[0]:
        raise DimensionMismatch("X_var rows and residual length differ")
    if not np.any(residuals != 0):
        raise AllZeroResiduals("cannot fit a variance model to all-zero residuals")
    gamma = lstsq_min_norm(X_var, log_residual_squares(residuals))
    cols = None if covariate_columns is None else tuple(covariate_columns)
    return LogVarianceFit(gamma, cols)


def standardize_cross_section(residuals, X_var, fit: LogVarianceFit) -> np.ndarray:
    residuals = np.asarray(residuals, dtype=float)
    X_var = np.asarray(X_var, dtype=float)
    if X_var.ndim == 1:
        X_var = X_var[:, None]
    if X_var.shape[0] != residuals.shape[0]:
        raise DimensionMismatch("X_var rows and residual length differ")
    return residuals * np.exp(-0.5 * (X_var @ fit.gamma))


# ---------------------------------------------------------------------------
# time-series case


@dataclass(frozen=True)
class ArGarchFit:
    delta: float
    rho: float
    c: float
    alpha_g: float
    beta_g: float
    loglik: float = float("nan")

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("GARCH intercept c must be positive")
        if self.alpha_g < 0 or self.beta_g < 0:
            raise ValueError("GARCH coefficients must be non-negative")
        if self.alpha_g + self.beta_g >= 1.0:
            raise ValueError("GARCH persistence must be below one")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.delta, self.rho, self.c, self.alpha_g, self.beta_g])

    @property
    def sigma0_sq(self) -> float:
        return self.c / (1.0 - self.alpha_g - self.beta_g)


def garch_variances(residuals, c, alpha_g, beta_g) -> np.ndarray:
    """``sigma[i]^2`` for i = 1..n (index 0 of the result is sigma_1^2)."""
    e = np.asarray(residuals, dtype=float)
    s0 = c / (1.0 - alpha_g - beta_g)
    drive = c + alpha_g * e * e
    out, _ = signal.lfilter([1.0], [1.0, -beta_g], drive, zi=[beta_g * s0])
    return out


def _loglik(params, e) -> float:
    delta, rho, c, a, b = params
    s2 = garch_variances(e[:-1], c, a, b)
    innov = e[1:] - delta - rho * e[:-1]
    return float(-0.5 * np.sum(np.log(2.0 * np.pi * s2) + innov * innov / s2))


def ar_garch_loglik(residuals, fit_or_params) -> float:
    """Gaussian conditional log-likelihood of ``e[2..n]`` given the first residual."""
    params = fit_or_params.params if isinstance(fit_or_params, ArGarchFit) else fit_or_params
    return _loglik(np.asarray(params, dtype=float), np.asarray(residuals, dtype=float))


_SCALE = 1.0 - STATIONARITY_MARGIN


def _to_natural(theta):
    delta, rt, lc, u1, u2 = theta
    m = max(0.0, u1, u2)
    e0, e1, e2 = math.exp(-m), math.exp(u1 - m), math.exp(u2 - m)
    tot = e0 + e1 + e2
    return np.array([delta, math.tanh(rt), math.exp(lc), _SCALE * e1 / tot, _SCALE * e2 / tot])


def _to_unconstrained(params):
    delta, rho, c, a, b = params
    rest = _SCALE - a - b
    return np.array([delta, math.atanh(rho), math.log(c), math.log(a / rest), math.log(b / rest)])


_COARSE = {"maxiter": 200}
_FINE = {"xatol": 1e-8, "fatol": 1e-10, "maxfev": 6000, "adaptive": True}

_START_AB = ((0.05, 0.90), (0.10, 0.80), (0.02, 0.97), (0.20, 0.50), (0.01, 0.01))


def _starts(e):
    mean = float(np.mean(e))
    d = e - mean
    denom = float(d[:-1] @ d[:-1])
    rho = float(d[1:] @ d[:-1]) / denom if denom > 0 else 0.0
    rho = float(np.clip(rho, -0.9, 0.9))
    delta = mean * (1.0 - rho)
    innov = e[1:] - delta - rho * e[:-1]
    v = max(float(np.var(innov)), 1e-12 * max(float(np.var(e)), 1e-300), 1e-300)
    return [np.array([delta, rho, v * (1.0 - a - b), a, b]) for a, b in _START_AB]


def fit_ar_garch(residuals, starts=None, multistart: bool = True) -> ArGarchFit:
    """Gaussian MLE of the AR(1)-GARCH(1,1) residual model.

    Optimises in unconstrained coordinates from five deterministic starts
    (plus any supplied ``starts``).  Every start gets a quasi-Newton search
    with numerical gradients; the best one is then refined by Nelder-Mead
    with restarts until the likelihood stalls.

    With ``multistart=False`` only the supplied ``starts`` are used, which is
    how the trial-value loop warm-starts from the neighbouring grid point.
    """
    e = np.asarray(residuals, dtype=float)
    if e.size < MIN_GARCH_LENGTH:
        raise TooShort(f"need at least {MIN_GARCH_LENGTH} residuals, got {e.size}")
    scale = float(np.std(e))
    if not scale > 0:
        raise OptimFailure("residuals are constant")
    # work on unit-scale data; delta scales with e, c with e^2
    z = e / scale
    init = _starts(z) if (multistart or not starts) else []
    if starts is not None:
        for s in starts:
            s = np.asarray(s.params if isinstance(s, ArGarchFit) else s, dtype=float)
            init.append(np.array([s[0] / scale, s[1], s[2] / scale ** 2, s[3], s[4]]))

    def nll(theta):
        try:
            val = -_loglik(_to_natural(theta), z)
        except (OverflowError, ValueError):
            return np.inf
        return val if np.isfinite(val) else np.inf

    best = None
    for p0 in init:
        p0 = p0.copy()
        p0[1] = float(np.clip(p0[1], -0.99, 0.99))
        p0[3] = max(p0[3], 1e-4)
        p0[4] = max(p0[4], 1e-4)
        if p0[3] + p0[4] >= 0.999:
            f = 0.999 / (p0[3] + p0[4])
            p0[3] *= f
            p0[4] *= f
        p0[2] = max(p0[2], 1e-8)
        theta0 = _to_unconstrained(p0)
        f0 = nll(theta0)
        if not np.isfinite(f0):
            continue
        res = optimize.minimize(nll, theta0, method="L-BFGS-B", options=_COARSE)
        theta, fval = (res.x, res.fun) if res.fun <= f0 else (theta0, f0)
        if best is None or fval < best[1]:
            best = (theta, fval)
    if best is not None:
        theta, fval = best
        for _ in range(4):
            res = optimize.minimize(nll, theta, method="Nelder-Mead", options=_FINE)
            if res.fun > fval - 1e-10:
                break
            theta, fval = res.x, res.fun
        best = (theta, fval)
    if best is None or not np.isfinite(best[1]):
        raise OptimFailure("no start produced a finite likelihood")
    delta, rho, c, a, b = _to_natural(best[0])
    fit = ArGarchFit(delta * scale, rho, c * scale ** 2, a, b)
    return ArGarchFit(fit.delta, fit.rho, fit.c, fit.alpha_g, fit.beta_g,
                      loglik=ar_garch_loglik(e, fit))


def standardize_time_series(residuals, fit: ArGarchFit):
    """Standardised innovations ``eta[2..n]`` plus ``sigma_n`` and ``e_n``.

    ``sigma_n`` and ``e_n`` are what the one-step-ahead score and interval
    at observation n+1 need.
    """
    e = np.asarray(residuals, dtype=float)
    if e.size < 2:
        raise TooShort("need at least two residuals")
    s2 = garch_variances(e, fit.c, fit.alpha_g, fit.beta_g)
    eta = (e[1:] - fit.delta - fit.rho * e[:-1]) / np.sqrt(s2[:-1])
    return eta, float(np.sqrt(s2[-1])), float(e[-1])


def simulate_ar_garch(fit, n: int, rng, burn: int = 500) -> np.ndarray:
    """Simulate ``n`` residuals from the model (after ``burn`` discarded steps)."""
    rng = np.random.default_rng(rng)
    delta, rho, c, a, b = fit.params if isinstance(fit, ArGarchFit) else fit
    total = n + burn
    z = rng.standard_normal(total)
    e = np.empty(total)
    s2_prev = c / (1.0 - a - b)
    e_prev = delta / (1.0 - rho)
    for i in range(total):
        s2 = c + a * e_prev * e_prev + b * s2_prev
        e[i] = delta + rho * e_prev + math.sqrt(s2) * z[i]
        e_prev, s2_prev = e[i], s2
    return e[burn:]


def ar_garch_standard_errors(residuals, fit: ArGarchFit, rel_step: float = 1e-4) -> np.ndarray:
    """Asymptotic standard errors from the inverse observed information.

    The Hessian of the log-likelihood in (delta, rho, c, alpha, beta) is taken
    by central differences.
    """
    e = np.asarray(residuals, dtype=float)
    x0 = fit.params
    h = rel_step * np.maximum(np.abs(x0), 1e-2 * np.std(e) ** np.array([1, 0, 2, 0, 0]))
    k = x0.size
    H = np.empty((k, k))
    f = lambda x: _loglik(x, e)
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h[i]
            ej[j] = h[j]
            val = (f(x0 + ei + ej) - f(x0 + ei - ej) - f(x0 - ei + ej) + f(x0 - ei - ej))
            H[i, j] = H[j, i] = val / (4.0 * h[i] * h[j])
    cov = np.linalg.inv(-H)
    return np.sqrt(np.diag(cov))
