"""Lower bounds for the CDT problem from Lagrangian relaxations with supporting cuts.

Five bounds are provided, each seeding the next:

* ``dual``    -- bisection on the multiplier of the plain relaxation;
* ``onecut``  -- one supporting cut at the projection of the violating witness;
* ``oneopt``  -- the single cut moved along the boundary of E while it helps;
* ``twocut``  -- a second cut at the projection of the new violating witness;
* ``twoopt``  -- both cuts moved while the bound improves.

Every relaxation value computed at any multiplier is a valid lower bound, so
the reported bound is always certified regardless of where a loop stops.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalError
from .lagrangian import CutRegion, RelaxationSolution, cut_active_value, solve_active_set_problem
from .model import (
    CdtInstance,
    Cut,
    ellipsoid_value,
    lambda_hat,
    perturb_cut,
    project_to_boundary,
    require_interior,
    supporting_cut,
)

log = logging.getLogger(__name__)

BOUND_NAMES = ("dual", "onecut", "oneopt", "twocut", "twoopt")
SOLVED_GAP = 1e-4
MAX_HALVINGS = 60


@dataclass
class BoundReport:
    bound_name: str
    lb: float
    final_lambda: float
    cuts: tuple = ()
    witness_outside: Optional[np.ndarray] = None
    witness_inside: Optional[np.ndarray] = None
    iterations: int = 0
    wall_time: float = 0.0
    trace: list = field(default_factory=list)
    lambda_hat: float = 0.0
    exact: bool = False  # relaxation minimizer feasible for the CDT problem


@dataclass(frozen=True)
class GapCertificate:
    lb: float
    ub: float
    rel_gap: float
    solved: bool


def default_eps(lam_hat: float) -> float:
    return 1e-8 * (1.0 + lam_hat)


def default_tol(lb: float) -> float:
    return 1e-6 * (1.0 + abs(lb))


def _trace_row(it, lam, lb, cuts):
    return {"iter": it, "lambda": lam, "lb": lb, "anchors": [np.array(c.anchor) for c in cuts]}


def _bisect(
    inst: CdtInstance,
    cuts: Sequence[Cut],
    lam_hi: float,
    eps: float,
    name: str,
    lb_seed: float = -np.inf,
    outside_seed: Optional[np.ndarray] = None,
    lam_hat: float = 0.0,
) -> BoundReport:
    """Multiplier bisection on ``[0, lam_hi]`` for the relaxation over ball ∩ cuts.

    The lower end moves while the relaxation's optimal set lies outside E, the
    upper end otherwise; the bound is the best relaxation value at an upper-end
    move (the first evaluation at ``lam_hi`` included).
    """
    t0 = time.perf_counter()
    region = CutRegion(inst, cuts)
    a0 = inst.a0
    lo, hi = 0.0, lam_hi
    lb = -np.inf
    outside, inside = outside_seed, None
    trace = []
    sol = region.solve(hi)
    if sol.h <= a0:
        lb = sol.value
        w = sol.inside(inst)
        inside = w.x if w is not None else None
    else:
        # the relaxation at lam_hi still has no minimizer in E: nothing to bisect
        lo = hi
        w = sol.outside(inst)
        outside = w.x if w is not None else outside
    trace.append(_trace_row(0, hi, lb, cuts))
    it = 0
    while hi - lo > eps:
        lam = 0.5 * (lo + hi)
        sol = region.solve(lam)
        it += 1
        if sol.h > a0:
            lo = lam
            outside = sol.outside(inst).x
        else:
            hi = lam
            lb = max(lb, sol.value)
            inside = sol.inside(inst).x
        trace.append(_trace_row(it, lam, lb, cuts))
    exact = False
    if lo == 0.0 and hi - lo <= eps:
        sol0 = region.solve(0.0)
        if sol0.h <= a0:
            lb, hi, exact = max(lb, sol0.value), 0.0, True
            inside = sol0.inside(inst).x
    return BoundReport(
        bound_name=name,
        lb=max(lb, lb_seed),
        final_lambda=hi,
        cuts=tuple(cuts),
        witness_outside=outside,
        witness_inside=inside,
        iterations=it,
        wall_time=time.perf_counter() - t0,
        trace=trace,
        lambda_hat=lam_hat,
        exact=exact,
    )


def lb_dual(inst: CdtInstance, eps: Optional[float] = None) -> BoundReport:
    """Dual Lagrangian bound by bisection of the multiplier on ``[0, lambda_hat]``."""
    t0 = time.perf_counter()
    require_interior(inst)
    lam_hat = lambda_hat(inst)
    eps = default_eps(lam_hat) if eps is None else eps
    region = CutRegion(inst)
    sol0 = region.solve(0.0)
    if sol0.h <= inst.a0:
        w = sol0.inside(inst)
        return BoundReport("dual", sol0.value, 0.0, witness_inside=w.x, iterations=0,
                           wall_time=time.perf_counter() - t0,
                           trace=[_trace_row(0, 0.0, sol0.value, ())],
                           lambda_hat=lam_hat, exact=True)
    rep = _bisect(inst, (), lam_hat, eps, "dual", lb_seed=sol0.value,
                  outside_seed=sol0.outside(inst).x, lam_hat=lam_hat)
    rep.wall_time = time.perf_counter() - t0
    return rep


def lb_one_cut(
    inst: CdtInstance,
    xbar: np.ndarray,
    lambda_start: float,
    eps: Optional[float] = None,
    lb_start: float = -np.inf,
    outside_seed: Optional[np.ndarray] = None,
    lam_hat: Optional[float] = None,
) -> BoundReport:
    """Bound with the supporting cut at ``xbar``, bisecting on ``[0, lambda_start]``."""
    lam_hat = lambda_hat(inst) if lam_hat is None else lam_hat
    eps = default_eps(lam_hat) if eps is None else eps
    cut = supporting_cut(inst, xbar)
    return _bisect(inst, (cut,), lambda_start, eps, "onecut", lb_seed=lb_start,
                   outside_seed=outside_seed, lam_hat=lam_hat)


def one_cut_from_dual(inst: CdtInstance, dual: BoundReport, eps: Optional[float] = None,
                      metric: str = "ellipsoid") -> BoundReport:
    if dual.witness_outside is None or dual.exact:
        return replace(dual, bound_name="onecut", iterations=0, wall_time=0.0, trace=[])
    xbar = project_to_boundary(inst, dual.witness_outside, metric=metric)
    return lb_one_cut(inst, xbar, dual.final_lambda, eps, lb_start=dual.lb,
                      outside_seed=dual.witness_outside, lam_hat=dual.lambda_hat)


def _halving_search(make_anchor: Callable[[float], Optional[np.ndarray]],
                    accept: Callable[[np.ndarray], bool]) -> Optional[np.ndarray]:
    eta = 1.0
    for _ in range(MAX_HALVINGS + 1):
        y = make_anchor(eta)
        if y is not None and accept(y):
            return y
        eta *= 0.5
    return None


def lb_one_opt(inst: CdtInstance, initial: BoundReport, tol: Optional[float] = None,
               eps: Optional[float] = None) -> BoundReport:
    """Move the single cut's anchor along the boundary of E while the bound improves."""
    t0 = time.perf_counter()
    best = replace(initial, bound_name="oneopt", trace=[])
    if len(initial.cuts) != 1 or initial.witness_outside is None or initial.exact:
        best.wall_time = time.perf_counter() - t0
        return best
    cut = initial.cuts[0]
    zstar = initial.witness_outside
    lam = initial.final_lambda
    lb, lb_old = initial.lb, -np.inf
    trace = [_trace_row(0, lam, lb, (cut,))]
    iters = 0
    while lb - lb_old > (default_tol(lb) if tol is None else tol):
        lb_old = lb
        if zstar is None or not cut.is_active(zstar):
            break

        def make(eta, cut=cut, zstar=zstar):
            return perturb_cut(inst, cut, zstar, eta, check_active=False)

        def accept(y, lam=lam, lb=lb):
            try:
                c = supporting_cut(inst, y)
            except ValueError:
                return False
            return cut_active_value(inst, lam, c) > lb

        y = _halving_search(make, accept)
        if y is None:
            break
        rep = lb_one_cut(inst, y, lam, eps, outside_seed=zstar, lam_hat=initial.lambda_hat)
        iters += 1
        cut, zstar, lam, lb = rep.cuts[0], rep.witness_outside, rep.final_lambda, rep.lb
        trace.append(_trace_row(iters, lam, lb, rep.cuts))
        if rep.lb > best.lb:
            best = replace(rep, bound_name="oneopt")
        if rep.exact:
            break
    best.iterations = iters
    best.trace = trace
    best.wall_time = time.perf_counter() - t0
    return best


def lb_two_cut(inst: CdtInstance, first: BoundReport, eps: Optional[float] = None,
               metric: str = "ellipsoid", second_anchor: Optional[np.ndarray] = None) -> BoundReport:
    """Add a supporting cut at the projection of the one-cut violating witness."""
    if len(first.cuts) != 1 or first.witness_outside is None or first.exact:
        return replace(first, bound_name="twocut", iterations=0, wall_time=0.0, trace=[])
    if second_anchor is None:
        second_anchor = project_to_boundary(inst, first.witness_outside, metric=metric)
    cut2 = supporting_cut(inst, second_anchor)
    eps = default_eps(first.lambda_hat) if eps is None else eps
    return _bisect(inst, (first.cuts[0], cut2), first.final_lambda, eps, "twocut",
                   lb_seed=first.lb, outside_seed=first.witness_outside, lam_hat=first.lambda_hat)


def lb_two_opt(inst: CdtInstance, initial: BoundReport, tol: Optional[float] = None,
               eps: Optional[float] = None) -> BoundReport:
    """Perturb whichever cut is active at the violating witness, then re-bisect."""
    t0 = time.perf_counter()
    best = replace(initial, bound_name="twoopt", trace=[])
    if len(initial.cuts) != 2 or initial.witness_outside is None or initial.exact:
        best.wall_time = time.perf_counter() - t0
        return best
    cuts = list(initial.cuts)
    v = initial.witness_outside
    lam, lb = initial.final_lambda, initial.lb
    trace = [_trace_row(0, lam, lb, cuts)]
    iters = 0
    lb_old = -np.inf
    while lb - lb_old > (default_tol(lb) if tol is None else tol):
        lb_old = lb
        active = [i for i in (0, 1) if cuts[i].is_active(v)]
        trial = None
        for i in active:

            def make(eta, c=cuts[i], v=v):
                return perturb_cut(inst, c, v, eta, check_active=False)

            def accept(y, i=i, lam=lam, lb=lb):
                try:
                    c = supporting_cut(inst, y)
                except ValueError:
                    return False
                cand = list(cuts)
                cand[i] = c
                value, _ = solve_active_set_problem(inst, lam, cand)
                return value > lb

            y = _halving_search(make, accept)
            if y is not None:
                trial = list(cuts)
                trial[i] = supporting_cut(inst, y)
                break
        if trial is None:
            break
        rep = _bisect(inst, trial, lam, default_eps(initial.lambda_hat) if eps is None else eps,
                      "twoopt", outside_seed=v, lam_hat=initial.lambda_hat)
        iters += 1
        cuts, v, lam, lb = list(rep.cuts), rep.witness_outside, rep.final_lambda, rep.lb
        trace.append(_trace_row(iters, lam, lb, cuts))
        if rep.lb > best.lb:
            best = replace(rep, bound_name="twoopt")
        if rep.exact or v is None:
            break
    best.iterations = iters
    best.trace = trace
    best.wall_time = time.perf_counter() - t0
    return best


def _local_search(inst: CdtInstance, x0: np.ndarray) -> Optional[np.ndarray]:
    Q, q, A, a, a0 = inst.Q, inst.q, inst.A, inst.a, inst.a0
    cons = [
        {"type": "ineq", "fun": lambda x: 1.0 - x @ x, "jac": lambda x: -2.0 * x},
        {"type": "ineq", "fun": lambda x: a0 - x @ A @ x - a @ x, "jac": lambda x: -(2.0 * A @ x + a)},
    ]
    res = minimize(lambda x: x @ Q @ x + q @ x, x0, jac=lambda x: 2.0 * Q @ x + q,
                   method="SLSQP", constraints=cons, options={"ftol": 1e-15, "maxiter": 500})
    x = res.x
    if not np.all(np.isfinite(x)):
        return None
    return _restore_feasibility(inst, x)


def _restore_feasibility(inst: CdtInstance, x: np.ndarray) -> Optional[np.ndarray]:
    """Pull a nearly feasible point strictly into the feasible set (tiny moves only)."""
    for _ in range(5):
        if inst.is_feasible(x, tol=0.0):
            return x
        nx = np.linalg.norm(x)
        if nx > 1.0:
            x = x / nx
        if ellipsoid_value(inst, x) > inst.a0:
            if ellipsoid_value(inst, x) > inst.a0 + 1e-6 * (1 + abs(inst.a0)):
                return None
            x = project_to_boundary(inst, x, metric="ellipsoid")
            c = -0.5 * np.linalg.solve(inst.A, inst.a)
            x = c + (x - c) * (1 - 1e-15)
    return x if inst.is_feasible(x) else None


def upper_bound(inst: CdtInstance, report: BoundReport) -> tuple:
    """Best feasible value from local searches seeded at the report's two witnesses."""
    seeds = []
    if report.witness_inside is not None:
        seeds.append(np.array(report.witness_inside))
    if report.witness_outside is not None:
        v = np.array(report.witness_outside)
        if ellipsoid_value(inst, v) > inst.a0:
            v = project_to_boundary(inst, v)
        seeds.append(v)
    best_x, best_f = None, np.inf
    for x0 in seeds:
        x = _local_search(inst, x0)
        if x is None:
            log.debug("local search from %s did not reach feasibility", x0)
            continue
        f = inst.objective(x)
        if f < best_f:
            best_x, best_f = x, f
    if best_x is None:
        raise NumericalError("no local search reached a feasible point")
    return best_f, best_x


def relative_gap(lb: float, ub: float) -> GapCertificate:
    if not np.isfinite(ub):
        raise ValueError("upper bound must be finite")
    diff = ub - lb
    gap = diff if abs(ub) <= 1e-12 else diff / abs(ub)
    return GapCertificate(lb, ub, gap, bool(gap <= SOLVED_GAP))


@dataclass
class Multiplicity:
    interior: Optional[float]
    cut1: Optional[float]
    cut2: Optional[float]
    both: Optional[float]
    near_tie: bool

    def values(self) -> tuple:
        return (self.interior, self.cut1, self.cut2, self.both)


def diagnose_multiplicity(inst: CdtInstance, lam: float, cutset: Sequence[Cut],
                          rel_tol: float = 1e-6) -> Multiplicity:
    """The four local-minimizer values of the two-cut relaxation used to spot stalled instances."""
    if len(cutset) != 2:
        raise ValueError("exactly two cuts required")
    region = CutRegion(inst, cutset)
    cands = region.candidates(lam)

    def pick(prefix_global, prefix_lng=None):
        g = [w.value for w in cands if w.kind == prefix_global]
        if g:
            return min(g)
        if prefix_lng is not None:
            l_ = [w.value for w in cands if w.kind == prefix_lng]
            if l_:
                return min(l_)
        return None

    inner = [w.value for w in cands if w.kind.startswith("free") and w.ell <= inst.a0]
    interior = min(inner) if inner else None
    cut1 = pick("face1-global", "face1-lng")
    cut2 = pick("face2-global", "face2-lng")
    both = pick("face12-global") or pick("face12-point")
    both = _both_active_value(region, lam) if both is None else both
    vals = [x for x in (interior, cut1, cut2, both) if x is not None]
    tie = False
    if vals:
        m = min(vals)
        tie = sum(1 for x in vals if x - m <= rel_tol * (1 + abs(m))) >= 3
    return Multiplicity(interior, cut1, cut2, both, tie)


def _both_active_value(region: CutRegion, lam: float) -> Optional[float]:
    cands = region.candidates(lam, faces=[(0, 1)], free=False)
    return min((w.value for w in cands), default=None)


def pipeline_order(selection: Sequence[str]) -> list:
    """Bounds that must be computed (prerequisites included) for ``selection``."""
    need = set(selection)
    unknown = need - set(BOUND_NAMES)
    if unknown:
        raise ValueError(f"unknown bound(s): {sorted(unknown)}")
    if "twoopt" in need:
        need |= {"twocut"}
    if need & {"oneopt", "twocut"}:
        need |= {"onecut"}
    need |= {"dual"}
    return [b for b in BOUND_NAMES if b in need]


@dataclass
class PipelineResult:
    reports: dict
    ub: float
    ub_point: np.ndarray
    cumulative_time: dict
    certificates: dict


def run_pipeline(inst: CdtInstance, selection: Sequence[str] = BOUND_NAMES,
                 eps: Optional[float] = None, tol: Optional[float] = None) -> PipelineResult:
    """Compute the selected bounds, their prerequisites, and the upper bound."""
    if not selection:
        raise ValueError("empty bound selection")
    order = pipeline_order(selection)
    reports, cum = {}, {}
    t0 = time.perf_counter()
    reports["dual"] = lb_dual(inst, eps)
    cum["dual"] = reports["dual"].wall_time
    if "onecut" in order:
        reports["onecut"] = one_cut_from_dual(inst, reports["dual"], eps)
        cum["onecut"] = cum["dual"] + reports["onecut"].wall_time
    if "oneopt" in order:
        reports["oneopt"] = lb_one_opt(inst, reports["onecut"], tol, eps)
        cum["oneopt"] = cum["onecut"] + reports["oneopt"].wall_time
    if "twocut" in order:
        reports["twocut"] = lb_two_cut(inst, reports["onecut"], eps)
        cum["twocut"] = cum["onecut"] + reports["twocut"].wall_time
    if "twoopt" in order:
        reports["twoopt"] = lb_two_opt(inst, reports["twocut"], tol, eps)
        cum["twoopt"] = cum["twocut"] + reports["twoopt"].wall_time
    t_ub = time.perf_counter()
    ub_src = reports.get("onecut", reports["dual"])
    if ub_src.exact or ub_src.witness_outside is None and ub_src.witness_inside is not None \
            and inst.is_feasible(ub_src.witness_inside):
        ub_point = np.array(ub_src.witness_inside)
        ub = inst.objective(ub_point)
    else:
        ub, ub_point = upper_bound(inst, ub_src)
    log.debug("upper bound %.12g in %.3fs (pipeline %.3fs)", ub, time.perf_counter() - t_ub,
              t_ub - t0)
    certs = {b: relative_gap(r.lb, ub) for b, r in reports.items()}
    return PipelineResult(reports, ub, ub_point, cum, certs)
