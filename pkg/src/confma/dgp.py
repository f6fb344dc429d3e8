"""Seeded simulators for the two Monte Carlo designs.

``gen_hansen`` draws an infinite-order (truncated) cross-sectional regression
with optional heteroskedasticity; ``gen_equity`` draws a persistent-predictor
return regression with innovations correlated across equations.  Both return
``(Dataset, y_next, x_next)`` where the last drawn row is held out as the
evaluation point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .core import ConfmaError, Dataset, ModelSet, Ordering, hansen_model_count, nested_model_set, validate_dataset


class SigmaEInfeasible(ConfmaError, ValueError):
    pass


def replication_rng(master_seed: int, replication: int) -> np.random.Generator:
    """Counter-based stream keyed by ``(master_seed, replication)``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(replication)])
    return np.random.Generator(np.random.Philox(ss))


def hansen_coefficients(c: float, alpha_decay: float, J: int) -> np.ndarray:
    """``beta_j = c sqrt(2 alpha) j^(-alpha - 1/2)`` for j = 1..J."""
    if J < 1:
        raise ValueError("J must be at least 1")
    j = np.arange(1, J + 1, dtype=float)
    return c * math.sqrt(2.0 * alpha_decay) * j ** (-alpha_decay - 0.5)


def calibrate_c_for_r2(r2: float) -> float:
    """``c = sqrt(r2 / (1 - r2))``."""
    if not 0.0 < r2 < 1.0:
        raise ValueError("r2 must lie in (0, 1)")
    return math.sqrt(r2 / (1.0 - r2))


def exact_c_for_r2(r2: float, alpha_decay: float, J: int) -> float:
    """``c`` giving population R^2 exactly ``r2`` when ``x_1`` is a constant.

    Only the non-intercept coefficients contribute signal variance, so the
    exact calibration solves ``sum_{j>=2} beta_j^2 = r2 / (1 - r2)``.
    """
    if J < 2:
        raise ValueError("J must be at least 2")
    tail = float(np.sum(hansen_coefficients(1.0, alpha_decay, J)[1:] ** 2))
    return math.sqrt(r2 / (1.0 - r2) / tail)


def hansen_population_r2(c: float, alpha_decay: float, J: int) -> float:
    """Population R^2 of the homoskedastic design with an intercept as ``x_1``."""
    s = float(np.sum(hansen_coefficients(c, alpha_decay, J)[1:] ** 2))
    return s / (s + 1.0)


@dataclass(frozen=True)
class HansenConfig:
    n: int = 150
    alpha_decay: float = 1.0
    r2: float = 0.5
    hetero: bool = False
    truncation_J: int = 1000
    seed: int = 0
    n_models: int | None = None
    exact_r2: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.truncation_J < self.p_max:
            raise ValueError("truncation_J must cover the largest candidate model")

    @property
    def M(self) -> int:
        return self.n_models if self.n_models is not None else hansen_model_count(self.n)

    @property
    def p_max(self) -> int:
        return self.M + 1

    @property
    def c(self) -> float:
        if self.exact_r2:
            return exact_c_for_r2(self.r2, self.alpha_decay, self.truncation_J)
        return calibrate_c_for_r2(self.r2)

    def model_set(self) -> ModelSet:
        """Model m uses the intercept and the next m regressors, m = 1..M."""
        return nested_model_set(self.p_max, 2)


def gen_hansen(cfg: HansenConfig, rng=None):
    """One draw of the cross-sectional design.

    Only the first ``M + 1`` regressors are exposed; the tail up to
    ``truncation_J`` still drives ``y``, so every candidate is misspecified.
    """
    rng = replication_rng(cfg.seed, 0) if rng is None else rng
    beta = hansen_coefficients(cfg.c, cfg.alpha_decay, cfg.truncation_J)
    rows = cfg.n + 1
    Z = rng.standard_normal((rows, cfg.truncation_J - 1))
    index = beta[0] + Z @ beta[1:]
    if cfg.hetero:
        sigma = np.exp(index)
    else:
        sigma = np.ones(rows)
    y = index + sigma * rng.standard_normal(rows)
    X = np.column_stack([np.ones(rows), Z[:, :cfg.p_max - 1]])
    data = validate_dataset(X[:-1], y[:-1], Ordering.EXCHANGEABLE)
    return data, float(y[-1]), X[-1].copy()


@dataclass(frozen=True)
class EquityConfig:
    """Persistent-predictor design.

    ``gamma_terms`` predictors get a nonzero ``gamma_j`` drawn uniformly on
    ``[gamma_lo, 0]``; the rest are zero.  With many nonzero terms
    ``sigma_u^2 - sigma_v^2 sum gamma_j^2`` is negative almost surely,
    so the count is kept small.  ``gamma`` fixes the loadings instead.
    """

    n: int = 100
    r2: float = 0.2
    rho_x: float = 0.953
    sigma_u: float = 0.202
    sigma_v: float = 0.154
    gamma_lo: float = -0.933
    alpha_decay: float = 1.0
    truncation_J: int = 1000
    seed: int = 0
    n_models: int | None = None
    gamma_terms: int = 3
    gamma: tuple[float, ...] | None = None
    burn_in: int = 500
    delta: float = 0.0
    max_redraws: int = 100

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not abs(self.rho_x) < 1.0:
            raise ValueError("rho_x must lie in (-1, 1)")
        if self.truncation_J < self.p_max - 1:
            raise ValueError("truncation_J must cover the largest candidate model")
        if not 0.0 <= self.r2 < 1.0:
            raise ValueError("r2 must lie in [0, 1)")

    @property
    def M(self) -> int:
        return self.n_models if self.n_models is not None else hansen_model_count(self.n)

    @property
    def p_max(self) -> int:
        # intercept plus the first M + 1 predictors
        return self.M + 2

    def model_set(self) -> ModelSet:
        """Model m uses the intercept and predictors 1..m+1, m = 1..M."""
        return nested_model_set(self.p_max, 3)

    def beta(self) -> np.ndarray:
        """Coefficients scaled so the population R^2 of the return equation is ``r2``."""
        shape = hansen_coefficients(1.0, self.alpha_decay, self.truncation_J)
        var_x = self.sigma_v ** 2 / (1.0 - self.rho_x ** 2)
        target = self.r2 / (1.0 - self.r2) * self.sigma_u ** 2 / var_x
        return shape * math.sqrt(target / float(shape @ shape))


def draw_gamma(cfg: EquityConfig, rng) -> np.ndarray:
    J = cfg.truncation_J
    if cfg.gamma is not None:
        g = np.zeros(J)
        g[:len(cfg.gamma)] = cfg.gamma
        if cfg.sigma_u ** 2 - cfg.sigma_v ** 2 * float(g @ g) < 0:
            raise SigmaEInfeasible("fixed gamma makes sigma_e^2 negative")
        return g
    k = min(cfg.gamma_terms, J)
    for _ in range(cfg.max_redraws):
        g = np.zeros(J)
        g[:k] = rng.uniform(cfg.gamma_lo, 0.0, size=k)
        if cfg.sigma_u ** 2 - cfg.sigma_v ** 2 * float(g @ g) >= 0:
            return g
    raise SigmaEInfeasible(f"sigma_e^2 negative after {cfg.max_redraws} gamma draws")


def gen_equity(cfg: EquityConfig, rng=None, return_params: bool = False):
    """One draw of the time-series design.

    Row ``i`` of the dataset pairs ``x_i`` (with an intercept) with
    ``r_{i+1}``.  Predictors start at their stationary law and run
    ``burn_in`` steps before the kept sample.  ``return_params`` appends a
    dict with the drawn ``gamma`` and ``sigma_e``.
    """
    rng = replication_rng(cfg.seed, 0) if rng is None else rng
    J = cfg.truncation_J
    gamma = draw_gamma(cfg, rng)
    sigma_e = math.sqrt(max(cfg.sigma_u ** 2 - cfg.sigma_v ** 2 * float(gamma @ gamma), 0.0))
    beta = cfg.beta()
    rows = cfg.n + 1
    steps = cfg.burn_in + rows
    sd_x = cfg.sigma_v / math.sqrt(1.0 - cfg.rho_x ** 2)
    x0 = sd_x * rng.standard_normal(J)
    v = cfg.sigma_v * rng.standard_normal((steps, J))
    e = sigma_e * rng.standard_normal(steps)
    path, _ = signal.lfilter([1.0], [1.0, -cfg.rho_x], v, axis=0, zi=cfg.rho_x * x0[None])
    x = np.vstack([x0, path])
    # u_{i+1} loads on the same innovations v_{i+1} that move x_{i+1}
    u = v @ gamma + e
    r = cfg.delta + x[:-1] @ beta + u
    keep = slice(cfg.burn_in, steps)
    Xp = x[:-1][keep, :cfg.p_max - 1]
    X = np.column_stack([np.ones(rows), Xp])
    y = r[keep]
    data = validate_dataset(X[:-1], y[:-1], Ordering.TIME_SERIES)
    if return_params:
        return data, float(y[-1]), X[-1].copy(), {"gamma": gamma, "sigma_e": sigma_e}
    return data, float(y[-1]), X[-1].copy()
