"""Fitting candidate-model ensembles on a sample and on augmented samples.

``EnsembleFitter.fit`` estimates every candidate model by OLS, computes the
weights of one scheme, and returns a :class:`~confma.core.FittedEnsemble`.

``AugmentedFits`` handles the full-conformal loop.  Appending the candidate
row ``(x_new, t)`` changes only the last response, and OLS fitted values are
linear in the response, so each model's fitted vector on the augmented sample
is exactly ``Fa + t * Fb``.  Leave-one-out fits and residual sums of squares
are affine and quadratic in ``t`` in the same way.  Weights are recomputed
for every trial value from these pieces; nothing is reused across ``t``
except the projections, which do not depend on ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (DimensionMismatch, FittedEnsemble, ModelSet, SchemeKind,
                   WeightScheme)
from .linalg import LEVERAGE_GUARD, LeverageOne, loo_fitted, lstsq_min_norm, ols, orthonormal_basis
from . import weights as wt


@dataclass(frozen=True)
class EnsembleFitter:
    model_set: ModelSet
    scheme: WeightScheme

    def __post_init__(self):
        if self.scheme.kind is SchemeKind.FIXED:
            wt.fixed_weights(self.scheme, len(self.model_set))

    @property
    def M(self) -> int:
        return len(self.model_set)

    def fit(self, X, y) -> "FittedRule":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.model_set.check_columns(X.shape[1])
        fits = [ols(X[:, m.columns], y) for m in self.model_set]
        F = np.column_stack([f.fitted for f in fits])
        p_vec = self.model_set.sizes
        n = y.size
        kind = self.scheme.kind
        if kind is SchemeKind.EQUAL:
            w = np.full(self.M, 1.0 / self.M)
        elif kind is SchemeKind.FIXED:
            w = wt.fixed_weights(self.scheme, self.M)
        elif kind is SchemeKind.REGRESSION:
            w = wt.regression_weights(F, y).w
        elif kind in (SchemeKind.SAIC, SchemeKind.SBIC):
            s2 = np.array([f.sigma2_mle for f in fits])
            ic = wt.sic_from_variances(s2, p_vec, n, "AIC" if kind is SchemeKind.SAIC else "BIC")
            w = wt._softmax_half(ic)
        elif kind is SchemeKind.MALLOWS:
            L = self.model_set.largest()
            s2 = wt.mallows_sigma2(fits[L].rss, n, int(p_vec[L]), self.scheme.sigma2_dof)
            w = wt.mallows_weights(F, y, s2, p_vec).w
        elif kind is SchemeKind.JACKKNIFE:
            F_loo = np.column_stack([loo_fitted(f) for f in fits])
            w = wt.jma_weights(F_loo, y).w
        else:  # pragma: no cover
            raise ValueError(kind)
        mu = F @ w
        ens = FittedEnsemble(coefficients=tuple(f.beta for f in fits), weights=w,
                             fitted_matrix=F, averaged_fit=mu, residuals=y - mu)
        return FittedRule(self.model_set, ens)


@dataclass(frozen=True)
class FittedRule:
    """A fitted ensemble usable as a prediction rule at new covariates."""

    model_set: ModelSet
    ensemble: FittedEnsemble

    def model_predictions(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([X[:, m.columns] @ b
                                for m, b in zip(self.model_set, self.ensemble.coefficients)])

    def predict(self, X) -> np.ndarray:
        return self.model_predictions(X) @ self.ensemble.weights

    @property
    def residuals(self) -> np.ndarray:
        return self.ensemble.residuals


@dataclass(frozen=True)
class BaggingFitter:
    """Bootstrap-aggregated OLS over a model set with equal model weights.

    Not available to full conformal (refitting is not affine in ``t``); it
    exists for the split engine, which accepts any ``fit(X, y)`` rule.
    """

    model_set: ModelSet
    n_bags: int = 50
    seed: int = 0

    def fit(self, X, y) -> "BaggedRule":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.model_set.check_columns(X.shape[1])
        rng = np.random.default_rng(self.seed)
        n = y.size
        coefs = [np.zeros(m.size) for m in self.model_set]
        for _ in range(self.n_bags):
            idx = rng.integers(0, n, n)
            for j, m in enumerate(self.model_set):
                coefs[j] += ols(X[idx][:, m.columns], y[idx]).beta / self.n_bags
        return BaggedRule(self.model_set, tuple(coefs))


@dataclass(frozen=True)
class BaggedRule:
    model_set: ModelSet
    coefficients: tuple

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        P = np.column_stack([X[:, m.columns] @ b for m, b in zip(self.model_set, self.coefficients)])
        return P.mean(axis=1)


def _poly_eval(coeffs, t):
    # coeffs: sequence of arrays c0, c1, c2; returns c0 + c1 t + c2 t^2 for each t
    t = np.asarray(t, dtype=float)
    shape = (t.size,) + (1,) * np.ndim(coeffs[0])
    tt = t.reshape(shape)
    out = np.broadcast_to(coeffs[0], tt.shape[:1] + np.shape(coeffs[0])).copy()
    for k, c in enumerate(coeffs[1:], start=1):
        out = out + c * tt ** k
    return out


class AugmentedFits:
    """Per-model fits on ``{(x_i, y_i)} U {(x_new, t)}`` as functions of ``t``."""

    def __init__(self, X, y, x_new, model_set: ModelSet, loo: bool | None = None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        x_new = np.asarray(x_new, dtype=float).ravel()
        if x_new.size != X.shape[1]:
            raise DimensionMismatch(f"x_new has {x_new.size} entries, X has {X.shape[1]} columns")
        model_set.check_columns(X.shape[1])
        self.model_set = model_set
        self.X = np.vstack([X, x_new])
        n1 = self.X.shape[0]
        self.n1 = n1
        self.y0 = np.append(y, 0.0)
        self.e = np.zeros(n1)
        self.e[-1] = 1.0
        M = len(model_set)
        Fa = np.empty((n1, M))
        Fb = np.empty((n1, M))
        H = np.empty((n1, M))
        for k, m in enumerate(model_set):
            U = orthonormal_basis(self.X[:, m.columns])
            Fa[:, k] = U @ (U.T @ self.y0)
            Fb[:, k] = U @ U[-1]
            H[:, k] = np.einsum("ij,ij->i", U, U)
        self.Fa, self.Fb, self.hat = Fa, Fb, H
        self.p_vec = model_set.sizes
        # residual of model k: ra + t rb
        self.ra = self.y0[:, None] - Fa
        self.rb = self.e[:, None] - Fb
        self._loo = None
        if loo:
            self._build_loo()

    def _build_loo(self):
        if self._loo is None:
            h = self.hat
            if np.any(h >= 1.0 - LEVERAGE_GUARD):
                raise LeverageOne("augmented sample has a leverage-one observation")
            La = (self.Fa - h * self.y0[:, None]) / (1.0 - h)
            Lb = (self.Fb - h * self.e[:, None]) / (1.0 - h)
            self._loo = (La, Lb)
        return self._loo

    # -- per-t quantities ---------------------------------------------------

    def fitted_matrix(self, t: float) -> np.ndarray:
        return self.Fa + t * self.Fb

    def loo_matrix(self, t: float) -> np.ndarray:
        La, Lb = self._build_loo()
        return La + t * Lb

    def response(self, t: float) -> np.ndarray:
        return self.y0 + t * self.e

    def rss(self, ts) -> np.ndarray:
        """Residual sums of squares, shape (len(ts), M)."""
        c0 = np.einsum("ij,ij->j", self.ra, self.ra)
        c1 = 2.0 * np.einsum("ij,ij->j", self.ra, self.rb)
        c2 = np.einsum("ij,ij->j", self.rb, self.rb)
        return np.maximum(_poly_eval((c0, c1, c2), ts), 0.0)

    def _gram_pieces(self, A, B):
        G = (A.T @ A, A.T @ B + B.T @ A, B.T @ B)
        g = (A.T @ self.y0, A.T @ self.e + B.T @ self.y0, B.T @ self.e)
        return G, g

    # -- weights over a grid ------------------------------------------------

    def grid_weights(self, scheme: WeightScheme, ts) -> np.ndarray:
        """Weights refit on every augmented sample, shape (len(ts), M)."""
        ts = np.asarray(ts, dtype=float)
        M = len(self.model_set)
        G = ts.size
        kind = scheme.kind
        if kind is SchemeKind.EQUAL:
            return np.full((G, M), 1.0 / M)
        if kind is SchemeKind.FIXED:
            return np.tile(wt.fixed_weights(scheme, M), (G, 1))
        if kind is SchemeKind.REGRESSION:
            Fs = self.Fa[None] + ts[:, None, None] * self.Fb[None]
            Ys = self.y0[None] + ts[:, None] * self.e[None]
            return lstsq_min_norm(Fs, Ys)
        if kind in (SchemeKind.SAIC, SchemeKind.SBIC):
            s2 = self.rss(ts) / self.n1
            ic = wt.sic_from_variances(s2, self.p_vec, self.n1,
                                       "AIC" if kind is SchemeKind.SAIC else "BIC")
            return wt._softmax_half(ic)
        if kind is SchemeKind.MALLOWS:
            (G0, G1, G2), (g0, g1, g2) = self._gram_pieces(self.Fa, self.Fb)
            L = self.model_set.largest()
            rss_L = self.rss(ts)[:, L]
            denom = self.n1 - self.p_vec[L] if scheme.sigma2_dof else self.n1
            s2 = rss_L / denom
            lin = [2.0 * s * self.p_vec for s in s2]
        elif kind is SchemeKind.JACKKNIFE:
            La, Lb = self._build_loo()
            (G0, G1, G2), (g0, g1, g2) = self._gram_pieces(La, Lb)
            lin = [np.zeros(M)] * G
        else:  # pragma: no cover
            raise ValueError(kind)
        W = np.empty((G, M))
        w_prev = None
        for k, t in enumerate(ts):
            FtF = G0 + t * G1 + t * t * G2
            Fty = g0 + t * g1 + t * t * g2
            qp = wt.SimplexQP(2.0 * FtF, -2.0 * Fty + lin[k])
            w_prev, _ = wt.solve_simplex_qp(qp, w0=w_prev, check_psd=(k == 0))
            W[k] = w_prev
        return W

    def grid_residuals(self, W, ts):
        """Averaged-fit residuals ``y_aug - F(t) w(t)``, shape (n+1, len(ts))."""
        ts = np.asarray(ts, dtype=float)
        mu = np.einsum("im,gm->ig", self.Fa, W) + np.einsum("im,gm->ig", self.Fb, W) * ts
        Y = self.y0[:, None] + self.e[:, None] * ts
        return Y - mu
