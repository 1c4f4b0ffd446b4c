"""Lagrangian relaxation of the CDT problem over the ball intersected with 0, 1 or 2 cuts.

For a fixed multiplier the relaxation is a nonconvex quadratic over
``{||x|| <= 1} ∩ {cuts}``. A global minimizer with active cut set ``S`` is a
local minimizer of the trust-region problem restricted to the affine set where
the cuts in ``S`` hold with equality, hence either the global or the
local-nonglobal minimizer of that restricted problem. Enumerating every ``S``
therefore yields the exact minimum using only TRS solves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import null_space

from .model import CdtInstance, Cut, ellipsoid_value
from .trs import TrsProblem, TrsSolution, solve_both, trs_global

BALL_TOL = 1e-8
CUT_TOL = 1e-10
TIE_TOL = 1e-8
RAD_TOL = 1e-12

CutSet = tuple  # tuple of 0, 1 or 2 Cut values


@dataclass
class Witness:
    x: np.ndarray
    value: float
    ell: float
    kind: str
    # flat optimal segment x + t*direction, t in t_range (zero-curvature hard case)
    direction: Optional[np.ndarray] = None
    t_range: tuple = (0.0, 0.0)

    def min_ell(self, inst: CdtInstance) -> float:
        if self.direction is None:
            return self.ell
        u = self.direction
        lo, hi = self.t_range
        c2 = float(u @ inst.A @ u)
        c1 = float((2.0 * inst.A @ self.x + inst.a) @ u)
        t = float(np.clip(-c1 / (2.0 * c2), lo, hi))
        return min(self.ell, ellipsoid_value(inst, self.x + t * u))


@dataclass
class RelaxationSolution:
    lam: float
    value: float
    witnesses: list
    h: float
    infeasible: bool = False
    candidates: list = field(default_factory=list)

    def outside(self, inst: CdtInstance) -> Optional[Witness]:
        """Witness violating the ellipsoid constraint the most, if any."""
        out = [w for w in self.witnesses if w.ell > inst.a0]
        return max(out, key=lambda w: w.ell) if out else None

    def inside(self, inst: CdtInstance) -> Optional[Witness]:
        ins = [w for w in self.witnesses if w.min_ell(inst) <= inst.a0]
        return min(ins, key=lambda w: w.min_ell(inst)) if ins else None


@dataclass
class ReducedProblem:
    """Restriction of the relaxation to an affine set: ``x = center + V u`` with ``||u|| <= radius``.

    ``problem`` is the TRS in ``u``; its value plus ``const`` equals the
    relaxation objective at the lifted point.
    """

    problem: Optional[TrsProblem]
    center: np.ndarray
    V: np.ndarray
    const: float
    rad2: float

    def lift(self, u: np.ndarray) -> np.ndarray:
        return self.center + self.V @ u

    @property
    def single_point(self) -> bool:
        return self.problem is None


@dataclass
class _Face:
    """Affine set of the active cuts in ``S``, independent of the multiplier."""

    rows: tuple
    center: np.ndarray
    V: np.ndarray
    rad2: float


def _lagrangian_data(inst: CdtInstance, lam: float):
    H = inst.Q + lam * inst.A
    g = inst.q + lam * inst.a
    return 0.5 * (H + H.T), g, -lam * inst.a0


def _face(cuts: Sequence[Cut], rows: tuple) -> Optional[_Face]:
    N = np.array([cuts[i].normal / np.linalg.norm(cuts[i].normal) for i in rows])
    beta = np.array([N[k] @ cuts[i].anchor for k, i in enumerate(rows)])
    center, *_ = np.linalg.lstsq(N, beta, rcond=None)
    if np.abs(N @ center - beta).max() > 1e-9 * (1 + np.abs(beta).max()):
        return None  # parallel distinct hyperplanes
    V = null_space(N, rcond=1e-10)
    rad2 = 1.0 - float(center @ center)
    if rad2 < -RAD_TOL:
        return None
    return _Face(rows, center, V, rad2)


def _reduce_on_face(H, g, const, face: _Face) -> ReducedProblem:
    c, V = face.center, face.V
    k0 = float(c @ H @ c + g @ c + const)
    if face.rad2 <= RAD_TOL or V.shape[1] == 0:
        return ReducedProblem(None, c, V, k0, max(face.rad2, 0.0))
    Hr = V.T @ H @ V
    gr = 2.0 * V.T @ (H @ c) + V.T @ g
    return ReducedProblem(TrsProblem(0.5 * (Hr + Hr.T), gr, np.sqrt(face.rad2)), c, V, k0, face.rad2)


def nullspace_reduce(inst: CdtInstance, lam: float, cut: Cut) -> Optional[ReducedProblem]:
    """Relaxation restricted to the cut hyperplane, as a TRS of dimension n-1.

    Returns ``None`` when the hyperplane misses the unit ball.
    """
    if not np.any(cut.normal):
        raise ValueError("zero cut normal")
    face = _face((cut,), (0,))
    if face is None:
        return None
    H, g, const = _lagrangian_data(inst, lam)
    return _reduce_on_face(H, g, const, face)


class CutRegion:
    """Ball ∩ cuts with the multiplier-independent face geometry precomputed."""

    def __init__(self, inst: CdtInstance, cuts: Sequence[Cut] = ()):
        if len(cuts) > 2:
            raise ValueError("at most two cuts are supported")
        self.inst = inst
        self.cuts = tuple(cuts)
        self.faces = {}
        for k in range(1, len(self.cuts) + 1):
            for rows in combinations(range(len(self.cuts)), k):
                self.faces[rows] = _face(self.cuts, rows)

    def feasible(self, x: np.ndarray, skip: tuple = ()) -> bool:
        if x @ x > 1 + BALL_TOL:
            return False
        return all(c.slack(x) <= CUT_TOL for i, c in enumerate(self.cuts) if i not in skip)

    def _t_range(self, x0, u, skip, tmax):
        lo, hi = -tmax, tmax
        for i, c in enumerate(self.cuts):
            if i in skip:
                continue
            s = c.normal @ u
            r = -(c.normal @ (x0 - c.anchor))
            if abs(s) < 1e-300:
                continue
            if s > 0:
                hi = min(hi, r / s)
            else:
                lo = max(lo, r / s)
        return lo, hi

    def _from_trs(self, sol: TrsSolution, face, kind, skip, offset, out):
        # the TRS value plus the face constant is the relaxation value of every point of the family
        inst = self.inst
        value = sol.value + offset
        if face is None:
            lift, dlift = (lambda y: y), (lambda d: d)
        else:
            lift, dlift = (lambda y: face.center + face.V @ y), (lambda d: face.V @ d)
        if sol.hard_case and sol.flat:
            x0 = lift(sol.x_particular)
            u = dlift(sol.hard_case_dir)
            nu = np.linalg.norm(u)
            if nu > 0:
                u = u / nu
                lo, hi = self._t_range(x0, u, skip, sol.t_max * nu)
                if lo <= hi:
                    t = 0.5 * (lo + hi)
                    x = x0 + t * u
                    out.append(Witness(x, value, ellipsoid_value(inst, x),
                                       kind, direction=u, t_range=(lo - t, hi - t)))
                    return
        for y in sol.family():
            x = lift(y)
            if self.feasible(x, skip):
                out.append(Witness(x, value, ellipsoid_value(inst, x), kind))

    def candidates(self, lam: float, faces: Optional[Sequence[tuple]] = None, free: bool = True) -> list:
        """Feasible local-minimizer candidates at ``lam`` tagged by origin."""
        inst = self.inst
        H, g, const = _lagrangian_data(inst, lam)
        out = []
        if free:
            p = TrsProblem(H, g, 1.0)
            glob, lng = solve_both(p)
            self._from_trs(glob, None, "free-global", (), const, out)
            if lng is not None:
                self._from_trs(lng, None, "free-lng", (), const, out)
        keys = self.faces.keys() if faces is None else faces
        for rows in keys:
            face = self.faces[rows]
            if face is None:
                continue
            tag = "face" + "".join(str(i + 1) for i in rows)
            red = _reduce_on_face(H, g, const, face)
            if red.single_point:
                x = red.center
                if self.feasible(x, rows):
                    out.append(Witness(x, float(x @ H @ x + g @ x + const), ellipsoid_value(inst, x),
                                       tag + "-point"))
                continue
            glob, lng = solve_both(red.problem)
            self._from_trs(glob, face, tag + "-global", rows, red.const, out)
            if lng is not None:
                self._from_trs(lng, face, tag + "-lng", rows, red.const, out)
        return out

    def solve(self, lam: float) -> RelaxationSolution:
        cands = self.candidates(lam)
        return _collect(self.inst, lam, cands)


def _collect(inst: CdtInstance, lam: float, cands: list) -> RelaxationSolution:
    if not cands:
        return RelaxationSolution(lam, np.inf, [], np.inf, infeasible=True)
    best = min(w.value for w in cands)
    tol = TIE_TOL * (1 + abs(best))
    wit = [w for w in cands if w.value <= best + tol]
    h = min(w.min_ell(inst) for w in wit)
    return RelaxationSolution(lam, best, wit, h, candidates=cands)


def solve_relaxation(inst: CdtInstance, lam: float, cutset: Sequence[Cut] = ()) -> RelaxationSolution:
    """Global minimum of the Lagrangian relaxation at ``lam`` over the ball and ``cutset``."""
    if lam < 0:
        raise ValueError("multiplier must be nonnegative")
    return CutRegion(inst, cutset).solve(lam)


def h_value(sol: RelaxationSolution, inst: Optional[CdtInstance] = None) -> float:
    if sol.infeasible:
        raise ValueError("relaxation is infeasible")
    if inst is None:
        return min(w.ell for w in sol.witnesses)
    return min(w.min_ell(inst) for w in sol.witnesses)


def solve_active_set_problem(inst: CdtInstance, lam: float, cutset: Sequence[Cut]) -> tuple:
    """Minimum over ball ∩ cuts with at least one of the two cuts active.

    Returns ``(value, witnesses)``; the value is ``inf`` with no witnesses when
    neither cut hyperplane meets the ball.
    """
    if len(cutset) != 2:
        raise ValueError("exactly two cuts required")
    region = CutRegion(inst, cutset)
    cands = region.candidates(lam, free=False)
    sol = _collect(inst, lam, cands)
    return sol.value, sol.witnesses


def cut_active_value(inst: CdtInstance, lam: float, cut: Cut) -> float:
    """Optimal value of the relaxation with the single cut forced active."""
    red = nullspace_reduce(inst, lam, cut)
    if red is None:
        return np.inf
    if red.single_point:
        return red.const
    return trs_global(red.problem).value + red.const
