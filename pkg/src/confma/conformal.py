"""Conformal prediction intervals for model-averaged forecasts.

Four procedures share one interface ``(data, x_new, fitter, cfg) -> IntervalReport``:

* :func:`full_conformal` refits every model and the weights on each
  augmented sample and keeps the trial values whose p-value exceeds alpha;
* :func:`adaptive_full_conformal` does the same on residuals prewhitened by
  a variance model (exchangeable) or an AR(1)-GARCH(1,1) model (time series);
* :func:`split_conformal` and :func:`adaptive_split_conformal` fit once on a
  training half and calibrate on the other, giving closed-form intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (ConfmaError, ConformalConfig, Dataset, IntervalReport, Ordering,
                   Variant)
from .ensemble import AugmentedFits, EnsembleFitter
from .linalg import lstsq_min_norm
from . import residual_models as rm


class DegenerateSpread(ConfmaError, ValueError):
    pass


class GridDegenerate(ConfmaError, ValueError):
    pass


class SplitTooSmall(ConfmaError, ValueError):
    pass


@dataclass(frozen=True)
class TrialGrid:
    values: np.ndarray
    lo: float
    hi: float

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.values.size - 1)


def conformal_pvalue(scores, score_new) -> float:
    """``(1 + #{i: scores_i >= score_new}) / (n + 1)``; ties count against the new point."""
    scores = np.asarray(scores, dtype=float)
    return (1.0 + np.count_nonzero(scores >= score_new)) / (scores.size + 1.0)


def _pvalues(R):
    # R: (n+1, G) with the candidate's score in the last row
    n = R.shape[0] - 1
    return (1.0 + np.count_nonzero(R[:-1] >= R[-1], axis=0)) / (n + 1.0)


def build_trial_grid(point: float, spread: float, cfg: ConformalConfig,
                     expansion: float | None = None) -> TrialGrid:
    """``cfg.grid_points`` equally spaced values on ``point +/- kappa * spread``."""
    if not spread > 0:
        raise DegenerateSpread("grid spread must be positive")
    kappa = cfg.grid_expansion if expansion is None else expansion
    half = kappa * spread
    lo, hi = point - half, point + half
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise GridDegenerate(f"cannot build a grid on [{lo}, {hi}]")
    # symmetric construction: offsets are exact negatives of each other
    offsets = np.linspace(-half, half, cfg.grid_points)
    offsets = 0.5 * (offsets - offsets[::-1])
    return TrialGrid(point + offsets, lo, hi)


def _safe_spread(spread, point):
    if spread > 0 and np.isfinite(spread):
        return spread
    return abs(point) * 1e-6 + 1e-6


def _report_from_mask(grid: TrialGrid, accepted, point, expansions, **diag) -> IntervalReport:
    """Hull of the accepted trial values.

    An accepted grid endpoint after the last widening means the accepted set
    is not contained in the grid; the report is then flagged unbounded.
    """
    idx = np.flatnonzero(accepted)
    if idx.size == 0:
        return IntervalReport(point, point, point, 0, True, grid.lo, grid.hi,
                              grid_expansions=expansions, diagnostics=diag)
    contiguous = bool(idx[-1] - idx[0] + 1 == idx.size)
    unbounded = bool(accepted[0] or accepted[-1])
    return IntervalReport(float(grid.values[idx[0]]), float(grid.values[idx[-1]]), point,
                          int(idx.size), contiguous, grid.lo, grid.hi, unbounded=unbounded,
                          grid_expansions=expansions, diagnostics=diag)


def _scan(grid_for, accept_fn, cfg):
    """Evaluate the acceptance mask, widening the grid while an endpoint is accepted."""
    kappa = cfg.grid_expansion
    for k in range(cfg.max_grid_expansions + 1):
        grid = grid_for(kappa)
        mask = accept_fn(grid.values)
        if not (mask[0] or mask[-1]) or k == cfg.max_grid_expansions:
            return grid, mask, k
        kappa *= 2.0


def _variance_design(X, model_set=None, columns=None):
    """Covariates of the log-variance regression, with an intercept guaranteed.

    Defaults to the columns of the largest candidate model.
    """
    if columns is None:
        if model_set is None:
            raise ValueError("variance_columns required for external prediction rules")
        columns = model_set[model_set.largest()].columns
    Z = X[:, list(columns)]
    const = np.all(Z == Z[:1], axis=0) & (Z[0] != 0)
    if not np.any(const):
        Z = np.column_stack([np.ones(X.shape[0]), Z])
    return Z


def _check_fitter(fitter):
    if not isinstance(fitter, EnsembleFitter):
        raise TypeError("full-sample procedures need an EnsembleFitter")


# ---------------------------------------------------------------------------
# full-sample procedures


def _exchangeable_scores(aug, fitter, cfg, ts):
    W = aug.grid_weights(fitter.scheme, ts)
    E = aug.grid_residuals(W, ts)
    Z = _variance_design(aug.X, fitter.model_set, cfg.variance_columns)
    gamma = lstsq_min_norm(Z[None], rm.log_residual_squares(E).T)  # (G, k)
    log_s2 = gamma @ Z.T  # (G, n+1)
    return np.abs(E) * np.exp(-0.5 * log_s2.T)


def _time_series_pvalues(aug, fitter, ts, warm=True):
    # one GARCH fit per trial value; neighbours warm-start each other
    W = aug.grid_weights(fitter.scheme, ts)
    E = aug.grid_residuals(W, ts)
    out = np.empty(ts.size)
    prev = None
    for g in range(ts.size):
        e = E[:, g]
        if prev is None or not warm:
            fit = rm.fit_ar_garch(e)
        else:
            fit = rm.fit_ar_garch(e, starts=[prev], multistart=False)
        prev = fit
        eta, _, _ = rm.standardize_time_series(e, fit)
        R = np.abs(eta)
        out[g] = conformal_pvalue(R[:-1], R[-1])
    return out


def trial_pvalues(data: Dataset, x_new, fitter: EnsembleFitter, ts, cfg: ConformalConfig,
                  aug: AugmentedFits | None = None) -> np.ndarray:
    """Full-conformal p-values at the trial values ``ts``.

    Uses the score family selected by ``cfg.adaptive`` and ``data.ordering``.
    """
    _check_fitter(fitter)
    x_new = np.asarray(x_new, dtype=float).ravel()
    ts = np.asarray(ts, dtype=float)
    if aug is None:
        aug = AugmentedFits(data.X, data.y, x_new, fitter.model_set)
    if not cfg.adaptive:
        W = aug.grid_weights(fitter.scheme, ts)
        return _pvalues(np.abs(aug.grid_residuals(W, ts)))
    if data.ordering is Ordering.EXCHANGEABLE:
        return _pvalues(_exchangeable_scores(aug, fitter, cfg, ts))
    return _time_series_pvalues(aug, fitter, ts)


def full_conformal(data: Dataset, x_new, fitter: EnsembleFitter, cfg: ConformalConfig,
                   aug: AugmentedFits | None = None) -> IntervalReport:
    """Full-sample conformal interval.

    Every candidate value ``t`` on the trial grid is appended as row n+1;
    all models and the weights are refit on the augmented sample and ``t``
    is kept when its p-value exceeds ``alpha``.  The report is the hull of
    the kept values.  When the hull touches the grid edge the grid is
    widened (doubling ``kappa``) up to ``cfg.max_grid_expansions`` times.
    """
    if cfg.adaptive:
        return adaptive_full_conformal(data, x_new, fitter, cfg, aug=aug)
    _check_fitter(fitter)
    x_new = np.asarray(x_new, dtype=float).ravel()
    pilot = fitter.fit(data.X, data.y)
    point = float(pilot.predict(x_new[None])[0])
    spread = _safe_spread(float(np.max(np.abs(pilot.residuals))), point)
    if aug is None:
        aug = AugmentedFits(data.X, data.y, x_new, fitter.model_set)

    def accept(ts):
        return trial_pvalues(data, x_new, fitter, ts, cfg, aug) > cfg.alpha

    grid, mask, k = _scan(lambda kappa: build_trial_grid(point, spread, cfg, kappa), accept, cfg)
    return _report_from_mask(grid, mask, point, k)


def adaptive_full_conformal(data: Dataset, x_new, fitter: EnsembleFitter, cfg: ConformalConfig,
                            aug: AugmentedFits | None = None) -> IntervalReport:
    """Full conformal on standardised residuals.

    The ensemble and the residual model are both refit on every augmented
    sample.  For time series the first residual has no lag, so the scores
    are those of observations 2..n+1 and the p-value denominator is n.
    """
    _check_fitter(fitter)
    x_new = np.asarray(x_new, dtype=float).ravel()
    pilot = fitter.fit(data.X, data.y)
    point = float(pilot.predict(x_new[None])[0])
    resid = pilot.residuals
    if aug is None:
        aug = AugmentedFits(data.X, data.y, x_new, fitter.model_set)

    if data.ordering is Ordering.EXCHANGEABLE:
        Z = _variance_design(aug.X, fitter.model_set, cfg.variance_columns)
        vfit = rm.fit_log_variance(Z[:-1], resid)
        eta = rm.standardize_cross_section(resid, Z[:-1], vfit)
        s_new = float(np.exp(0.5 * Z[-1] @ vfit.gamma))
        spread = max(float(np.max(np.abs(resid))), float(np.max(np.abs(eta))) * s_new)

    else:
        gfit = rm.fit_ar_garch(resid)
        eta, s_n, e_n = rm.standardize_time_series(resid, gfit)
        shift = gfit.delta + gfit.rho * e_n
        spread = max(float(np.max(np.abs(resid))), float(np.max(np.abs(eta))) * s_n + abs(shift))

    def accept(ts):
        return trial_pvalues(data, x_new, fitter, ts, cfg, aug) > cfg.alpha

    spread = _safe_spread(spread, point)
    grid, mask, k = _scan(lambda kappa: build_trial_grid(point, spread, cfg, kappa), accept, cfg)
    return _report_from_mask(grid, mask, point, k)


# ---------------------------------------------------------------------------
# split-sample procedures


def split_indices(n: int, ordering: Ordering, fraction: float = 0.5, seed: int = 0):
    """Training / calibration index sets.

    Exchangeable data are split after a seeded random permutation; time
    series keep time order, the first ``floor(n * fraction)`` rows training.
    """
    n_train = int(math.floor(n * fraction))
    if n_train < 1 or n_train >= n:
        raise SplitTooSmall(f"cannot split {n} rows with fraction {fraction}")
    if Ordering(ordering) is Ordering.TIME_SERIES:
        idx = np.arange(n)
    else:
        idx = np.random.default_rng(seed).permutation(n)
    return np.sort(idx[:n_train]), np.sort(idx[n_train:])


def calibration_rank(n_cal: int, alpha: float) -> int:
    """``ceil((n_cal + 1)(1 - alpha))``, guarded against floating-point noise."""
    return int(math.ceil((n_cal + 1) * (1.0 - alpha) - 1e-9))


def kth_score(scores, alpha: float) -> float:
    scores = np.sort(np.asarray(scores, dtype=float))
    k = calibration_rank(scores.size, alpha)
    return float(scores[k - 1]) if k <= scores.size else math.inf


@dataclass(frozen=True)
class SplitState:
    rule: object
    train: np.ndarray
    calib: np.ndarray
    scores: np.ndarray
    k_index: int
    d: float
    center: float
    scale: float
    residual_fit: object = None
    point: float = float("nan")


def _fit_rule(fitter, X, y):
    rule = fitter.fit(X, y)
    if not hasattr(rule, "predict"):
        raise TypeError("fitter.fit must return an object with a predict method")
    return rule


def _min_train(fitter):
    ms = getattr(fitter, "model_set", None)
    return int(ms.sizes.max()) + 1 if ms is not None else 2


def split_state(data: Dataset, x_new, fitter, cfg: ConformalConfig) -> SplitState:
    """Fit on the training half and compute the calibration scores.

    ``fitter`` is anything with ``fit(X, y) -> rule`` where ``rule.predict(X)``
    returns predictions; external rules such as bagged or Bayesian averages
    plug in here.
    """
    x_new = np.asarray(x_new, dtype=float).ravel()
    train, calib = split_indices(data.n, data.ordering, cfg.split_fraction, cfg.seed)
    if train.size < _min_train(fitter):
        raise SplitTooSmall(f"training half has {train.size} rows, need {_min_train(fitter)}")
    rule = _fit_rule(fitter, data.X[train], data.y[train])
    mu_cal = rule.predict(data.X[calib])
    point = float(rule.predict(x_new[None])[0])
    e_cal = data.y[calib] - mu_cal
    residual_fit = None
    center, scale = point, 1.0

    if not cfg.adaptive:
        scores = np.abs(e_cal)
    elif data.ordering is Ordering.EXCHANGEABLE:
        Z = _variance_design(np.vstack([data.X, x_new]), getattr(fitter, "model_set", None),
                             cfg.variance_columns)
        e_train = data.y[train] - rule.predict(data.X[train])
        residual_fit = rm.fit_log_variance(Z[train], e_train)
        scores = np.abs(rm.standardize_cross_section(e_cal, Z[calib], residual_fit))
        scale = float(np.exp(0.5 * Z[-1] @ residual_fit.gamma))
    else:
        e_all = data.y - rule.predict(data.X)
        residual_fit = rm.fit_ar_garch(e_all[train])
        s2 = rm.garch_variances(e_all, residual_fit.c, residual_fit.alpha_g, residual_fit.beta_g)
        prev = calib - 1
        eta = (e_all[calib] - residual_fit.delta - residual_fit.rho * e_all[prev]) / np.sqrt(s2[prev])
        scores = np.abs(eta)
        center = point + residual_fit.delta + residual_fit.rho * float(e_all[-1])
        scale = float(np.sqrt(s2[-1]))

    k = calibration_rank(scores.size, cfg.alpha)
    d = kth_score(scores, cfg.alpha)
    return SplitState(rule, train, calib, scores, k, d, center, scale, residual_fit, point)


def split_conformal(data: Dataset, x_new, fitter, cfg: ConformalConfig,
                    method: str = "closed") -> IntervalReport:
    """Split-sample interval ``center +/- d * scale``.

    ``method="grid"`` instead scans a trial grid with the split p-value,
    which agrees with the closed form up to one grid step.
    """
    st = split_state(data, x_new, fitter, cfg)
    base = float(np.max(st.scores)) * st.scale
    base = _safe_spread(base, st.center)
    if method == "grid":
        def accept(ts):
            r_new = np.abs(ts - st.center) / st.scale
            cnt = np.count_nonzero(st.scores[:, None] >= r_new[None], axis=0)
            return (1.0 + cnt) / (st.scores.size + 1.0) > cfg.alpha
        grid, mask, k = _scan(lambda kappa: build_trial_grid(st.center, base, cfg, kappa),
                              accept, cfg)
        rep = _report_from_mask(grid, mask, st.point, k, d=st.d, k_index=st.k_index)
        if math.isinf(st.d):
            rep = replace(rep, unbounded=True)
        return rep
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    half_grid = cfg.grid_expansion * base
    if math.isinf(st.d):
        return IntervalReport(st.center - half_grid, st.center + half_grid, st.point,
                              cfg.grid_points, True, st.center - half_grid,
                              st.center + half_grid, unbounded=True,
                              diagnostics={"d": st.d, "k_index": st.k_index})
    half = st.d * st.scale
    span = max(half_grid, half)
    return IntervalReport(st.center - half, st.center + half, st.point, cfg.grid_points, True,
                          st.center - span, st.center + span,
                          diagnostics={"d": st.d, "k_index": st.k_index})


def adaptive_split_conformal(data: Dataset, x_new, fitter, cfg: ConformalConfig,
                             method: str = "closed") -> IntervalReport:
    """Split interval on standardised scores; the residual model is fit on the training half."""
    return split_conformal(data, x_new, fitter, replace(cfg, adaptive=True), method=method)


def conformal_interval(data: Dataset, x_new, fitter, cfg: ConformalConfig, **kw) -> IntervalReport:
    """Dispatch on ``cfg.variant`` and ``cfg.adaptive``."""
    if cfg.variant is Variant.SPLIT:
        return split_conformal(data, x_new, fitter, cfg)
    if cfg.adaptive:
        return adaptive_full_conformal(data, x_new, fitter, cfg, **kw)
    return full_conformal(data, x_new, fitter, cfg, **kw)
