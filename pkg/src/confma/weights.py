"""Model-averaging weight schemes.

Equal, fixed, regression (Granger-Ramanathan), smoothed AIC/BIC, Mallows (MMA)
and jackknife (JMA) weights.  The two criterion-based schemes reduce to a
simplex QP solved by :mod:`confma.simplex`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfmaError, DimensionMismatch, EmptyInput, SchemeKind, WeightScheme
from .linalg import lstsq_min_norm
from .simplex import SimplexQP, solve_simplex_qp

INTERPOLATION_FLOOR = 1e-300


class NonPositiveVariance(ConfmaError, ValueError):
    pass


@dataclass(frozen=True)
class WeightFit:
    w: np.ndarray
    objective: float
    kkt_residual: float
    scheme: WeightScheme


def equal_weights(M: int) -> WeightFit:
    if M < 1:
        raise ValueError("M must be at least 1")
    return WeightFit(np.full(M, 1.0 / M), float("nan"), 0.0, WeightScheme(SchemeKind.EQUAL))


def regression_weights(F, y) -> WeightFit:
    """Unconstrained least squares of ``y`` on the columns of ``F`` (no intercept).

    Collinear forecasts get the minimum-norm solution.
    """
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    if F.size == 0 or y.size == 0:
        raise EmptyInput("regression weights need a non-empty forecast matrix")
    if F.shape[0] != y.shape[0]:
        raise DimensionMismatch("F and y row counts differ")
    w = lstsq_min_norm(F, y)
    r = y - F @ w
    return WeightFit(w, float(r @ r), 0.0, WeightScheme(SchemeKind.REGRESSION))


def information_criterion(sigma2: float, p_m: int, n_obs: int, kind: str = "AIC") -> float:
    if not sigma2 > 0:
        raise NonPositiveVariance(f"sigma2 must be positive, got {sigma2}")
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    kind = kind.upper()
    if kind == "AIC":
        penalty = 2.0 * p_m
    elif kind == "BIC":
        penalty = p_m * np.log(n_obs)
    else:
        raise ValueError(f"unknown criterion {kind!r}")
    return n_obs * np.log(sigma2) + penalty


def sic_weights(ic) -> WeightFit:
    """Softmax of ``-IC/2``, shifted by the minimum for stability.

    Entries equal to ``-inf`` (interpolating models) share all the weight.
    """
    ic = np.asarray(ic, dtype=float)
    return WeightFit(_softmax_half(ic), float("nan"), 0.0, WeightScheme(SchemeKind.SAIC))


def _softmax_half(ic):
    ic = np.asarray(ic, dtype=float)
    exact = np.isneginf(ic)
    if np.any(exact, axis=-1).any():
        out = np.zeros_like(ic)
        rows = np.any(exact, axis=-1)
        out[rows] = exact[rows] / exact[rows].sum(axis=-1, keepdims=True)
        if np.any(~rows):
            out[~rows] = _softmax_half(ic[~rows])
        return out
    z = -(ic - ic.min(axis=-1, keepdims=True)) / 2.0
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sic_from_variances(sigma2, p_vec, n_obs, kind):
    """Information criteria for a vector (or stack) of residual variances.

    Variances at or below the interpolation floor map to ``-inf``.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    p_vec = np.asarray(p_vec, dtype=float)
    penalty = 2.0 * p_vec if kind == "AIC" else p_vec * np.log(n_obs)
    with np.errstate(divide="ignore"):
        ic = n_obs * np.log(np.maximum(sigma2, 0.0)) + penalty
    return np.where(sigma2 <= INTERPOLATION_FLOOR, -np.inf, ic)


def _ls_simplex(FtF, Fty, yty, linear, w0=None):
    Q = 2.0 * FtF
    b = -2.0 * Fty + linear
    qp = SimplexQP(Q, b)
    w, kkt = solve_simplex_qp(qp, w0=w0)
    return w, qp.objective(w) + yty, kkt


def mallows_weights(F, y, sigma2_largest: float, p_vec, w0=None) -> WeightFit:
    """Minimise ``||y - F w||^2 + 2 sigma2 sum(w p)`` over the unit simplex."""
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    p_vec = np.asarray(p_vec, dtype=float)
    if p_vec.shape != (F.shape[1],):
        raise DimensionMismatch("p_vec length must equal the number of models")
    if sigma2_largest < 0:
        raise NonPositiveVariance("sigma2_largest must be non-negative")
    w, obj, kkt = _ls_simplex(F.T @ F, F.T @ y, float(y @ y),
                              2.0 * sigma2_largest * p_vec, w0)
    return WeightFit(w, obj, kkt, WeightScheme(SchemeKind.MALLOWS))


def jma_weights(F_loo, y, w0=None) -> WeightFit:
    """Minimise the leave-one-out criterion ``||y - F_loo w||^2`` over the simplex."""
    F_loo = np.asarray(F_loo, dtype=float)
    y = np.asarray(y, dtype=float)
    M = F_loo.shape[1]
    w, obj, kkt = _ls_simplex(F_loo.T @ F_loo, F_loo.T @ y, float(y @ y), np.zeros(M), w0)
    return WeightFit(w, obj, kkt, WeightScheme(SchemeKind.JACKKNIFE))


def mallows_sigma2(rss_largest: float, n_obs: int, p_largest: int, dof: bool = False) -> float:
    denom = n_obs - p_largest if dof else n_obs
    if denom <= 0:
        raise NonPositiveVariance("degrees of freedom exhausted for the Mallows variance")
    return rss_largest / denom


def fixed_weights(scheme: WeightScheme, M: int) -> np.ndarray:
    w = np.asarray(scheme.weights, dtype=float)
    if w.shape != (M,):
        raise DimensionMismatch(f"fixed weights have length {w.size}, expected {M}")
    return w
