"""Dense trust-region subproblem kernel.

Solves ``min w'Hw + g'w  s.t. ||w||^2 <= r^2`` through one symmetric
eigendecomposition followed by scalar root finding on the secular equation.
Besides the global minimizer, the (at most one) local-nonglobal minimizer can
be recovered; the cut-augmented relaxations need both.

Multipliers follow the convention ``(H + mu I) w = -g/2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh, null_space
from scipy.optimize import brentq

SYM_TOL = 1e-10
HARD_CASE_TOL = 1e-10
EIG_GAP_TOL = 1e-10


class PoleError(ArithmeticError):
    """Secular function evaluated on (or numerically at) one of its poles."""


@dataclass(frozen=True)
class TrsProblem:
    H: np.ndarray
    g: np.ndarray
    r: float = 1.0

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = g.shape[0]
        if H.shape != (n, n) or n < 1:
            raise ValueError(f"H must be {n}x{n}, got {H.shape}")
        if not self.r > 0:
            raise ValueError("radius must be positive")
        scale = max(1.0, np.abs(H).max())
        if np.abs(H - H.T).max() > SYM_TOL * scale:
            raise ValueError("H is not symmetric")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "r", float(self.r))

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def objective(self, w: np.ndarray) -> float:
        return float(w @ self.H @ w + self.g @ w)


@dataclass
class TrsSolution:
    x: np.ndarray
    value: float
    mu: float
    on_boundary: bool
    hard_case: bool = False
    hard_case_dir: Optional[np.ndarray] = None
    # when hard_case: x = x_particular + t*hard_case_dir, t in [-t_max, t_max]
    x_particular: Optional[np.ndarray] = None
    t_max: float = 0.0
    flat: bool = False  # hard case with zero curvature: whole segment is optimal

    def family(self) -> list[np.ndarray]:
        """Boundary representatives of the optimal set (both ends in the hard case)."""
        if not self.hard_case or self.t_max == 0.0:
            return [self.x]
        return [self.x_particular + s * self.t_max * self.hard_case_dir for s in (1.0, -1.0)]


@dataclass
class _Eig:
    lam: np.ndarray
    V: np.ndarray
    gt: np.ndarray
    hnorm: float
    gnorm: float
    extras: dict = field(default_factory=dict)


def sym_eig(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (as columns) of a symmetric matrix."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("square matrix expected")
    scale = max(1.0, np.abs(H).max()) if H.size else 1.0
    if H.size and np.abs(H - H.T).max() > SYM_TOL * scale:
        raise ValueError("matrix is not symmetric")
    if H.shape[0] == 1:
        return H[0].copy(), np.ones((1, 1))
    lam, V = eigh(0.5 * (H + H.T))
    return lam, V


def secular_norm_sq(eigvals, g_eig, mu: float) -> float:
    """Return ||x(mu)||^2 with x(mu) = -(H + mu I)^{-1} g / 2, in the eigenbasis of H."""
    eigvals = np.asarray(eigvals, dtype=float)
    g_eig = np.asarray(g_eig, dtype=float)
    d = eigvals + mu
    scale = max(1.0, np.abs(eigvals).max())
    active = g_eig != 0.0
    if np.any(np.abs(d[active]) < 1e-14 * scale):
        raise PoleError(f"mu={mu} sits on a pole of the secular function")
    return float(np.sum((g_eig[active] / 2.0) ** 2 / d[active] ** 2))


def _decompose(p: TrsProblem) -> _Eig:
    lam, V = sym_eig(p.H)
    gt = V.T @ p.g
    return _Eig(lam, V, gt, float(np.abs(lam).max()), float(np.linalg.norm(p.g)))


def _bottom_block(e: _Eig) -> np.ndarray:
    tol = EIG_GAP_TOL * max(1.0, e.hnorm)
    return e.lam - e.lam[0] <= tol


def _inv_norm(c: np.ndarray, d: np.ndarray) -> float:
    """1/||x|| with ||x||^2 = sum c/d^2; zero at a pole."""
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.sum(np.where(c > 0, c / d**2, 0.0))
    if not np.isfinite(s):
        return 0.0
    return 1.0 / np.sqrt(s) if s > 0 else np.inf


def _assemble(p: TrsProblem, e: _Eig, xt: np.ndarray, mu: float, **kw) -> TrsSolution:
    x = e.V @ xt
    value = float(np.sum(e.lam * xt**2) + e.gt @ xt)
    on_boundary = mu > 0 or abs(np.linalg.norm(x) - p.r) <= 1e-10 * p.r
    return TrsSolution(x=x, value=value, mu=float(mu), on_boundary=bool(on_boundary), **kw)


def trs_global(p: TrsProblem, _eig: Optional[_Eig] = None) -> TrsSolution:
    """Global minimizer of the trust-region subproblem.

    In the hard case the returned solution also carries the null direction
    ``hard_case_dir`` and the particular solution so callers can walk the
    optimal family ``x_particular + t * hard_case_dir``.
    """
    e = _eig or _decompose(p)
    r = p.r
    lam1 = e.lam[0]
    gaps = e.lam - lam1
    c = (e.gt / 2.0) ** 2

    if lam1 > 0:
        xt = -e.gt / (2.0 * e.lam)
        if np.linalg.norm(xt) <= r:
            return _assemble(p, e, xt, 0.0)

    bottom = _bottom_block(e)
    g_bottom = np.linalg.norm(e.gt[bottom])
    if lam1 <= 0 and g_bottom <= HARD_CASE_TOL * e.gnorm:
        xt = np.zeros_like(e.gt)
        rest = ~bottom
        xt[rest] = -e.gt[rest] / (2.0 * gaps[rest])
        nrm = np.linalg.norm(xt)
        if nrm < r:
            t = np.sqrt(r * r - nrm * nrm)
            u = e.V[:, 0].copy()
            xp = e.V @ xt
            sol = _assemble(p, e, xt + t * np.eye(len(xt))[0], -lam1)
            sol.on_boundary = True
            sol.hard_case = True
            sol.hard_case_dir = u
            sol.x_particular = xp
            sol.t_max = float(t)
            sol.flat = abs(lam1) <= EIG_GAP_TOL * max(1.0, e.hnorm)
            return sol
        c = np.where(bottom, 0.0, c)

    # delta = mu + lam1 keeps the bottom pole at the origin for accuracy.
    d_lo = max(lam1, 0.0)
    d_hi = max(d_lo, e.gnorm / (2.0 * r) + max(lam1, 0.0)) + 1e-300

    def phi(delta):
        return _inv_norm(c, gaps + delta) - 1.0 / r

    f_lo, f_hi = phi(d_lo), phi(d_hi)
    if f_lo >= 0:
        delta = d_lo
    elif f_hi <= 0:
        delta = d_hi
    else:
        delta = brentq(phi, d_lo, d_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    d = gaps + delta
    with np.errstate(divide="ignore", invalid="ignore"):
        xt = np.where(c > 0, -e.gt / (2.0 * d), 0.0)
    return _assemble(p, e, xt, delta - lam1)


def _tangent_min_eig(e: _Eig, xt: np.ndarray, mu: float) -> float:
    n = len(xt)
    if n == 1:
        return np.inf
    P = null_space(xt[None, :])
    M = P.T @ ((e.lam + mu)[:, None] * P)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def trs_local_nonglobal(p: TrsProblem, _eig: Optional[_Eig] = None) -> Optional[TrsSolution]:
    """Local-nonglobal minimizer, or ``None`` when the problem has none.

    The candidate multiplier is the right-hand root of the boundary secular
    equation on ``(max(0, -lam2), -lam1)``; it is accepted only if the Hessian
    of the Lagrangian is positive semidefinite on the tangent space.
    """
    e = _eig or _decompose(p)
    lam1 = e.lam[0]
    if lam1 >= 0:
        return None
    r = p.r
    tol_eig = EIG_GAP_TOL * max(1.0, e.hnorm)
    gaps = e.lam - lam1
    if len(gaps) > 1:
        gap2 = gaps[1]
        if gap2 <= tol_eig:
            return None
    else:
        gap2 = np.inf
    if abs(e.gt[0]) <= HARD_CASE_TOL * e.gnorm or e.gt[0] == 0.0:
        return None
    c = (e.gt / 2.0) ** 2

    lo = max(-gap2, lam1)

    def dpsi(delta):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return float(-2.0 * np.sum(np.where(c > 0, c / (gaps + delta) ** 3, 0.0)))

    # psi is convex on the interval; locate its minimizer by sign bisection of psi'.
    a, b = lo, 0.0
    if lo > -gap2 and dpsi(lo) >= 0:
        d_min = lo
    else:
        for _ in range(200):
            m = 0.5 * (a + b)
            if m <= a or m >= b:
                break
            if dpsi(m) < 0:
                a = m
            else:
                b = m
        d_min = 0.5 * (a + b)

    def phi(delta):
        return _inv_norm(c, gaps + delta) - 1.0 / r

    if not phi(d_min) > 0:
        return None
    delta = brentq(phi, d_min, 0.0, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    if not delta < 0:
        return None
    mu = delta - lam1
    if mu < 0:
        return None
    d = gaps + delta
    with np.errstate(divide="ignore", invalid="ignore"):
        xt = np.where(c > 0, -e.gt / (2.0 * d), 0.0)
    if _tangent_min_eig(e, xt, mu) < -1e-8 * max(1.0, e.hnorm):
        return None
    sol = _assemble(p, e, xt, mu)
    glob = trs_global(p, e)
    if sol.value <= glob.value + 1e-10 * (1 + abs(glob.value)):
        if min(np.linalg.norm(sol.x - y) for y in glob.family()) > 1e-8:
            return None
    return sol


def solve_both(p: TrsProblem) -> tuple[TrsSolution, Optional[TrsSolution]]:
    """Global and local-nonglobal solutions from a single factorization."""
    e = _decompose(p)
    return trs_global(p, e), trs_local_nonglobal(p, e)
