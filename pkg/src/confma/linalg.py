"""Least-squares machinery: OLS via SVD, hat diagonals, leave-one-out fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfmaError, DimensionMismatch, EmptyInput


class LeverageOne(ConfmaError, ValueError):
    """Raised when some observation has leverage 1 and its leave-one-out fit is undefined."""


LEVERAGE_GUARD = 1e-12


def _rank_tol(s, shape):
    if s.size == 0:
        return 0.0
    return np.finfo(float).eps * max(shape) * s[..., :1]


def orthonormal_basis(A: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space of ``A`` (rank-revealing SVD)."""
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0:
        return U[:, :0]
    r = int(np.sum(s > _rank_tol(s, A.shape)))
    return U[:, :r]


def lstsq_min_norm(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution of ``A x = b``.

    Works on stacks: ``A`` of shape (..., n, k) and ``b`` of shape (..., n).
    """
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    tol = _rank_tol(s, A.shape[-2:])
    inv = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
    Utb = np.einsum("...nk,...n->...k", U, b)
    return np.einsum("...kj,...k->...j", Vt, inv * Utb)


@dataclass(frozen=True)
class OlsFit:
    beta: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    sigma2_mle: float
    hat_diag: np.ndarray
    rank: int

    @property
    def rss(self) -> float:
        return float(self.residuals @ self.residuals)


def ols(Xm, y) -> OlsFit:
    """Least squares of ``y`` on ``Xm`` through an SVD.

    Rank-deficient designs get the minimum-norm coefficient vector.
    ``sigma2_mle`` is RSS / rows.
    """
    Xm = np.asarray(Xm, dtype=float)
    y = np.asarray(y, dtype=float)
    if Xm.ndim == 1:
        Xm = Xm[:, None]
    if Xm.size == 0 or y.size == 0:
        raise EmptyInput("ols needs at least one row and one column")
    if Xm.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"Xm has {Xm.shape[0]} rows, y has {y.shape[0]}")
    U, s, Vt = np.linalg.svd(Xm, full_matrices=False)
    r = int(np.sum(s > _rank_tol(s, Xm.shape)))
    U, s, Vt = U[:, :r], s[:r], Vt[:r]
    Uty = U.T @ y
    beta = Vt.T @ (Uty / s)
    fitted = U @ Uty
    resid = y - fitted
    hat = np.einsum("ij,ij->i", U, U)
    return OlsFit(beta=beta, fitted=fitted, residuals=resid,
                  sigma2_mle=float(resid @ resid) / Xm.shape[0],
                  hat_diag=hat, rank=r)


def loo_fitted(fit: OlsFit) -> np.ndarray:
    """Exact leave-one-out predictions ``yhat_i - h_ii e_i / (1 - h_ii)``."""
    h = fit.hat_diag
    if np.any(h >= 1.0 - LEVERAGE_GUARD):
        i = int(np.argmax(h))
        raise LeverageOne(f"observation {i} has leverage {h[i]:.15g}; leave-one-out fit undefined")
    return fit.fitted - h * fit.residuals / (1.0 - h)


def hat_diagonal(Xm) -> np.ndarray:
    U = orthonormal_basis(np.asarray(Xm, dtype=float))
    return np.einsum("ij,ij->i", U, U)
