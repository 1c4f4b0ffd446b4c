"""CDT instances and the geometry of the ellipsoid constraint.

An instance is ``min x'Qx + q'x  s.t.  x'x <= 1,  x'Ax + a'x <= a0`` with
``A`` positive definite. The second constraint set is the ellipsoid ``E``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import AssumptionError, ValidationError
from .trs import TrsProblem, sym_eig, trs_global

ACTIVE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class CdtInstance:
    Q: np.ndarray
    q: np.ndarray
    A: np.ndarray
    a: np.ndarray
    a0: float
    name: str = ""
    meta: Optional[dict] = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        n = q.shape[0]
        for label, M in (("Q", Q), ("A", A)):
            if M.shape != (n, n):
                raise ValidationError(f"{label} must be {n}x{n}, got {M.shape}")
        if a.shape != (n,):
            raise ValidationError(f"a must have length {n}")
        arrays = (Q, q, A, a, np.array([self.a0], dtype=float))
        if not all(np.all(np.isfinite(x)) for x in arrays):
            raise ValidationError("instance data contains NaN or infinite entries")
        for label, M in (("Q", Q), ("A", A)):
            if np.abs(M - M.T).max() > 1e-10 * max(1.0, np.abs(M).max()):
                raise ValidationError(f"{label} is not symmetric")
        alpha = np.linalg.eigvalsh(A)
        if alpha[0] <= 1e-12 * max(1.0, np.abs(alpha).max()):
            raise ValidationError("A is not positive definite")
        for label, M in (("Q", Q), ("A", A), ("q", q), ("a", a)):
            M.setflags(write=False)
            object.__setattr__(self, label, M)
        object.__setattr__(self, "a0", float(self.a0))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(x @ self.Q @ x + self.q @ x)

    def lagrangian(self, x: np.ndarray, lam: float) -> float:
        return self.objective(x) + lam * (ellipsoid_value(self, x) - self.a0)

    def is_feasible(self, x: np.ndarray, tol: float = 1e-8) -> bool:
        return bool(x @ x <= 1 + tol and ellipsoid_value(self, x) <= self.a0 + tol * (1 + abs(self.a0)))

    def same_data(self, other: "CdtInstance") -> bool:
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("Q", "q", "A", "a")
        ) and self.a0 == other.a0


@dataclass(frozen=True, eq=False)
class Cut:
    """Supporting hyperplane ``normal'(x - anchor) <= 0`` of E at ``anchor``."""

    anchor: np.ndarray
    normal: np.ndarray

    def slack(self, x: np.ndarray) -> float:
        """Signed violation scaled by the normal norm (positive = violated)."""
        return float(self.normal @ (x - self.anchor) / np.linalg.norm(self.normal))

    def is_active(self, x: np.ndarray, tol: float = ACTIVE_TOL) -> bool:
        d = x - self.anchor
        return abs(self.normal @ d) <= tol * (1 + np.linalg.norm(self.normal) * np.linalg.norm(d))


@dataclass(frozen=True)
class EllipsoidInfo:
    ell_a: float
    argmin_z: np.ndarray
    satisfied: bool
    lambda_hat: Optional[float] = None


def example1() -> CdtInstance:
    """Two-dimensional instance with a duality gap; its optimal value is -4."""
    return CdtInstance(
        Q=[[-4.0, 1.0], [1.0, -2.0]],
        q=[1.0, 1.0],
        A=[[3.0, 0.0], [0.0, 1.0]],
        a=[0.0, 0.0],
        a0=2.0,
        name="example1",
        meta={"optimal_value": -4.0},
    )


def ellipsoid_value(inst: CdtInstance, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ inst.A @ x + inst.a @ x)


def _boundary_tol(inst: CdtInstance) -> float:
    return 1e-8 * (1 + abs(inst.a0))


def check_interior_assumption(inst: CdtInstance) -> EllipsoidInfo:
    sol = trs_global(TrsProblem(inst.A, inst.a, 1.0))
    ok = sol.value < inst.a0 - 1e-10 * (1 + abs(inst.a0))
    return EllipsoidInfo(ell_a=sol.value, argmin_z=sol.x, satisfied=bool(ok))


def require_interior(inst: CdtInstance) -> EllipsoidInfo:
    info = check_interior_assumption(inst)
    if not info.satisfied:
        raise AssumptionError(
            f"min of the ellipsoid function over the ball is {info.ell_a:.6g} >= a0 = {inst.a0:.6g}"
        )
    return info


def lambda_hat(inst: CdtInstance) -> float:
    """Multiplier beyond which every Lagrangian minimizer over the ball lies in E."""
    info = require_interior(inst)
    lo = trs_global(TrsProblem(inst.Q, inst.q, 1.0)).value
    hi = -trs_global(TrsProblem(-inst.Q, -inst.q, 1.0)).value
    return max(0.0, (hi - lo) / (inst.a0 - info.ell_a))


def ellipsoid_info(inst: CdtInstance) -> EllipsoidInfo:
    info = require_interior(inst)
    return EllipsoidInfo(info.ell_a, info.argmin_z, True, lambda_hat(inst))


def ellipsoid_center(inst: CdtInstance) -> np.ndarray:
    return -0.5 * np.linalg.solve(inst.A, inst.a)


def project_to_boundary(inst: CdtInstance, v: np.ndarray, metric: str = "ellipsoid") -> np.ndarray:
    """Project a point outside E onto E; the result lies on the boundary.

    ``metric="ellipsoid"`` measures distance in the norm induced by ``A``, which
    amounts to pulling ``v`` radially towards the center of E.
    ``metric="euclidean"`` gives the ordinary nearest point of E.
    """
    v = np.asarray(v, dtype=float)
    if ellipsoid_value(inst, v) <= inst.a0:
        raise ValueError("point is not outside the ellipsoid")
    if metric == "ellipsoid":
        c = ellipsoid_center(inst)
        d = v - c
        rho2 = inst.a0 - ellipsoid_value(inst, c)
        return c + d * np.sqrt(rho2 / float(d @ inst.A @ d))
    if metric != "euclidean":
        raise ValueError(f"unknown metric {metric!r}")
    alpha, W = sym_eig(inst.A)
    vt = W.T @ v
    at = W.T @ inst.a

    def x_of(nu):
        return (vt - 0.5 * nu * at) / (1.0 + nu * alpha)

    def resid(nu):
        xt = x_of(nu)
        return float(np.sum(alpha * xt**2) + at @ xt) - inst.a0

    hi = 1.0
    while resid(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("projection multiplier diverged")
    nu = brentq(resid, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return W @ x_of(nu)


def supporting_cut(inst: CdtInstance, xbar: np.ndarray, tol: Optional[float] = None) -> Cut:
    xbar = np.asarray(xbar, dtype=float).copy()
    tol = _boundary_tol(inst) if tol is None else tol
    if abs(ellipsoid_value(inst, xbar) - inst.a0) > tol:
        raise ValueError("cut anchor is not on the ellipsoid boundary")
    normal = 2.0 * inst.A @ xbar + inst.a
    if not np.any(normal):
        raise ValueError("zero cut normal")
    xbar.setflags(write=False)
    normal.setflags(write=False)
    return Cut(anchor=xbar, normal=normal)


def boundary_correction_gamma(
    inst: CdtInstance, xbar: np.ndarray, v: np.ndarray, eta: float
) -> Optional[float]:
    """Smallest gamma > 0 putting ``xbar + eta(v - xbar) - gamma*n`` on the boundary of E.

    ``n = 2A xbar + a``. Returns ``None`` when no positive root exists.
    """
    xbar = np.asarray(xbar, dtype=float)
    p = xbar + eta * (np.asarray(v, dtype=float) - xbar)
    nrm = 2.0 * inst.A @ xbar + inst.a
    # e(p - g n) = e(p) - g (2Ap + a)'n + g^2 n'An
    qa = float(nrm @ inst.A @ nrm)
    qb = -float((2.0 * inst.A @ p + inst.a) @ nrm)
    qc = ellipsoid_value(inst, p) - inst.a0
    disc = qb * qb - 4.0 * qa * qc
    eps = np.finfo(float).eps
    if disc < 0:
        if disc < -64 * eps * (qb * qb + abs(4.0 * qa * qc)):
            return None
        disc = 0.0  # double root blurred by rounding
    # cancellation-free pair of roots
    t = -0.5 * (qb + np.copysign(np.sqrt(disc), qb))
    roots = [t / qa]
    if t != 0:
        roots.append(qc / t)
    # a root that is zero up to rounding of e(p) - a0 counts as the smallest positive one
    floor = -64 * eps * (abs(ellipsoid_value(inst, p)) + abs(inst.a0) + 1.0) / max(abs(qb), 1e-300)
    pos = [max(z, 0.0) for z in roots if z > floor]
    return min(pos) if pos else None


def perturb_cut(
    inst: CdtInstance, cut: Cut, v: np.ndarray, eta: float, check_active: bool = True
) -> Optional[np.ndarray]:
    """New anchor ``xbar + eta(v - xbar) - gamma n`` on the boundary of E, or ``None``."""
    v = np.asarray(v, dtype=float)
    xbar = cut.anchor
    d = v - xbar
    if check_active and abs(cut.normal @ d) > ACTIVE_TOL * np.linalg.norm(cut.normal) * max(
        np.linalg.norm(d), 1e-300
    ) + 1e-12:
        raise ValueError("cut is not active at v")
    gamma = boundary_correction_gamma(inst, xbar, v, eta)
    if gamma is None:
        return None
    return xbar + eta * d - gamma * cut.normal
