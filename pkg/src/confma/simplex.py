"""Convex quadratic programs over the probability simplex.

Minimise ``0.5 w'Qw + b'w`` subject to ``w >= 0, sum(w) = 1`` for a symmetric
positive-semidefinite ``Q``.  The main route is a primal active-set method,
which terminates at an exact KKT point for the small problems met here and
warm-starts cheaply from a nearby solution.  Accelerated projected gradient
is kept as a fallback for instances where the active set stalls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfmaError


class SolverFailure(ConfmaError, RuntimeError):
    pass


class NotPSD(ConfmaError, ValueError):
    pass


KKT_TOL = 1e-9


@dataclass(frozen=True)
class SimplexQP:
    Q: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if Q.shape != (b.size, b.size):
            raise ValueError(f"Q has shape {Q.shape} but b has length {b.size}")
        if b.size < 1:
            raise ValueError("need at least one variable")
        scale = max(1.0, float(np.max(np.abs(Q))))
        if np.max(np.abs(Q - Q.T)) > 1e-10 * scale:
            raise ValueError("Q must be symmetric")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "b", b)

    @property
    def M(self) -> int:
        return self.b.size

    def objective(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(0.5 * w @ self.Q @ w + self.b @ w)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the unit simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def kkt_residual(Q, b, w) -> float:
    """Scaled KKT violation at a feasible ``w``.

    With gradient ``g`` and multiplier ``lam`` (mean of ``g`` on the support),
    stationarity needs ``g == lam`` on the support and ``g >= lam`` elsewhere.
    The largest violation is divided by ``1 + max|Q| + max|b|`` so the measure
    is invariant to the overall scale of the data.
    """
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.asarray(w, dtype=float)
    g = Q @ w + b
    supp = w > 0
    if not np.any(supp):
        return float("inf")
    lam = float(np.mean(g[supp]))
    viol = np.max(np.abs(g[supp] - lam))
    off = ~supp
    if np.any(off):
        viol = max(viol, float(np.max(np.maximum(lam - g[off], 0.0))))
    feas = max(abs(float(w.sum()) - 1.0), float(np.max(np.maximum(-w, 0.0))))
    scale = 1.0 + float(np.max(np.abs(Q))) + float(np.max(np.abs(b)))
    return max(viol / scale, feas)


def _sum_zero_basis(k: int) -> np.ndarray:
    # Householder reflector sending 1/sqrt(k) to e_1; its remaining columns
    # span the orthogonal complement of the ones vector.
    v = np.full(k, 1.0 / np.sqrt(k))
    v[0] -= 1.0
    H = np.eye(k) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


_BASES: dict[int, np.ndarray] = {}


def _basis(k):
    Z = _BASES.get(k)
    if Z is None:
        Z = _BASES[k] = _sum_zero_basis(k)
    return Z


def _eqp_direction(QF, gF, scale):
    """Step minimising the quadratic model on ``sum(p) = 0``.

    Returns ``(p, unbounded)``; ``unbounded`` marks a zero-curvature descent
    direction, along which the step is limited only by the bounds.
    """
    k = gF.size
    if k == 1:
        return np.zeros(1), False
    Z = _basis(k)
    Hr = Z.T @ QF @ Z
    r = Z.T @ gF
    lam, V = np.linalg.eigh(Hr)
    tol = max(float(lam[-1]), 0.0) * 1e-11 + 1e-14 * scale
    c = V.T @ r
    null = lam <= tol
    if np.any(null) and np.linalg.norm(c[null]) > 1e-12 * (scale + np.linalg.norm(gF)):
        p = -Z @ (V[:, null] @ c[null])
        return p, True
    pos = ~null
    p = -Z @ (V[:, pos] @ (c[pos] / lam[pos]))
    return p, False


def _active_set(Q, b, w, free, max_iter, scale):
    if not np.any(free):
        free[int(np.argmax(w))] = True
    w = np.where(free, np.maximum(w, 0.0), 0.0)
    if w.sum() <= 0:
        w[free] = 1.0
    w = w / w.sum()
    stationary = False
    for _ in range(max_iter):
        F = np.flatnonzero(free)
        g = Q @ w + b
        if stationary:
            p, unbounded = np.zeros(F.size), False
        else:
            p, unbounded = _eqp_direction(Q[np.ix_(F, F)], g[F], scale)
        step_small = np.max(np.abs(p)) <= 1e-13 * (1.0 + np.max(np.abs(w))) if p.size else True
        if step_small and not unbounded:
            # w minimises the model on the current face; check the multipliers
            stationary = False
            lam = float(np.mean(g[F]))
            fixed = np.flatnonzero(~free)
            if fixed.size == 0:
                return w, True
            mu = g[fixed] - lam
            j = int(np.argmin(mu))
            if mu[j] >= -1e-13 * scale:
                return w, True
            free[fixed[j]] = True
            continue
        neg = p < 0
        ratios = np.full(p.size, np.inf)
        ratios[neg] = -w[F][neg] / p[neg]
        j = int(np.argmin(ratios))
        step = ratios[j]
        if not unbounded:
            step = min(1.0, step)
        if not np.isfinite(step):
            return w, False
        w = w.copy()
        w[F] += step * p
        if step < 1.0 or unbounded:
            w[F[j]] = 0.0
            free[F[j]] = False
        else:
            stationary = True
        w = np.maximum(w, 0.0)
        w /= w.sum()
    return w, False


def _largest_eigenvalue(Q, iters=200):
    v = np.ones(Q.shape[0]) / np.sqrt(Q.shape[0])
    lam = 0.0
    for _ in range(iters):
        u = Q @ v
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            return 0.0
        v = u / nrm
        new = float(v @ Q @ v)
        if abs(new - lam) <= 1e-12 * abs(new):
            lam = new
            break
        lam = new
    # power iteration approaches from below; pad so 1/L stays a valid step
    return lam * 1.01 + 1e-300


def _apg(Q, b, w, max_iter):
    L = _largest_eigenvalue(Q)
    if L <= 1e-300:
        e = np.zeros_like(b)
        e[int(np.argmin(b))] = 1.0
        return e
    x = w.copy()
    z = w.copy()
    t = 1.0
    for it in range(max_iter):
        x_new = project_simplex(z - (Q @ z + b) / L)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if it % 50 == 0 and kkt_residual(Q, b, x) < KKT_TOL:
            break
    return x


def solve_simplex_qp(qp: SimplexQP, w0=None, tol: float = KKT_TOL,
                     max_iter: int = 50_000, check_psd: bool = True):
    """Solve a :class:`SimplexQP`; returns ``(w, kkt_residual)``.

    ``w0`` warm-starts the active set from its support.
    """
    Q, b = qp.Q, qp.b
    M = qp.M
    if M == 1:
        return np.ones(1), 0.0
    qmax = float(np.max(np.abs(Q)))
    if check_psd and qmax > 0:
        lmin = float(np.linalg.eigvalsh(Q)[0])
        if lmin < -1e-6 * np.linalg.norm(Q, 2):
            raise NotPSD(f"smallest eigenvalue {lmin:.3g} is negative")
    scale = 1.0 + qmax + float(np.max(np.abs(b)))

    if w0 is not None and np.asarray(w0).shape == (M,):
        w = np.maximum(np.asarray(w0, dtype=float), 0.0)
        s = w.sum()
        if s <= 0:
            w = None
        else:
            w = w / s
    else:
        w = None
    if w is None:
        k = int(np.argmin(0.5 * np.diag(Q) + b))
        w = np.zeros(M)
        w[k] = 1.0
    free = w > 0

    budget = max(100, 20 * M)
    w_as, ok = _active_set(Q, b, w, free.copy(), budget, scale)
    if ok:
        res = kkt_residual(Q, b, w_as)
        if res < tol:
            return w_as, res

    # fallback: projected gradient, then polish on the detected support
    w_pg = _apg(Q, b, w_as, max_iter)
    w_pol, _ = _active_set(Q, b, w_pg, w_pg > 1e-10, budget, scale)
    best = min((w_pol, w_pg, w_as), key=lambda v: kkt_residual(Q, b, v))
    res = kkt_residual(Q, b, best)
    if res >= tol:
        raise SolverFailure(f"KKT residual {res:.3g} above tolerance {tol:g}")
    return best, res
