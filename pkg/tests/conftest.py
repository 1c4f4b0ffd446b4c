"""Independent brute-force oracles for two-dimensional problems.

Nothing here calls the solvers under test: minima come from dense polar grids
over the unit disc plus dense samples of every boundary curve (circle, ellipse,
cut chords), which pins constrained optima to far below the 1e-3 test level.
"""
from __future__ import annotations

import numpy as np
import pytest


def quad_values(H, g, P):
    """x'Hx + g'x for each row of P."""
    return np.einsum("ij,jk,ik->i", P, H, P) + P @ g


def polar_grid(nr=2001, nt=4001):
    rho = np.linspace(0.0, 1.0, nr)
    th = np.linspace(0.0, 2 * np.pi, nt, endpoint=False)
    R, T = np.meshgrid(rho, th, indexing="ij")
    return np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])


def circle(m=200_000, r=1.0):
    th = np.linspace(0.0, 2 * np.pi, m, endpoint=False)
    return r * np.column_stack([np.cos(th), np.sin(th)])


def ellipse_boundary(A, a, a0, m=200_000):
    """Points with x'Ax + a'x = a0."""
    c = -0.5 * np.linalg.solve(A, a)
    rho2 = a0 - (c @ A @ c + a @ c)
    if rho2 <= 0:
        return np.zeros((0, 2))
    L = np.linalg.cholesky(A)
    U = circle(m) * np.sqrt(rho2)
    return c + np.linalg.solve(L.T, U.T).T


def chord(anchor, normal, m=200_000):
    """Points of the line normal'(x - anchor) = 0 inside the unit disc."""
    nn = normal / np.linalg.norm(normal)
    c = (nn @ anchor) * nn
    d2 = 1.0 - c @ c
    if d2 < 0:
        return np.zeros((0, 2))
    t = np.linspace(-np.sqrt(d2), np.sqrt(d2), m)
    u = np.array([-nn[1], nn[0]])
    return c + t[:, None] * u


def brute_min(H, g, const=0.0, feasible=None, grid=None, curves=()):
    """Minimum of x'Hx + g'x + const over the disc restricted by ``feasible``."""
    P = polar_grid(401, 1201) if grid is None else grid
    pts = [P, circle()] + [c for c in curves if len(c)]
    best = np.inf
    for S in pts:
        if feasible is not None:
            S = S[feasible(S)]
            S = S[np.einsum("ij,ij->i", S, S) <= 1 + 1e-12]
        if len(S):
            best = min(best, float(quad_values(H, g, S).min()) + const)
    return best


def cdt_brute(inst, grid=None):
    """Brute-force optimum of the CDT instance (ball and ellipsoid)."""
    Q, q, A, a, a0 = (np.asarray(inst.Q), np.asarray(inst.q), np.asarray(inst.A),
                      np.asarray(inst.a), inst.a0)

    def feas(S):
        return quad_values(A, a, S) <= a0 + 1e-12

    eb = ellipse_boundary(A, a, a0)
    return brute_min(Q, q, feasible=feas, grid=grid, curves=(eb,))


@pytest.fixture(scope="session")
def fine_grid():
    return polar_grid(2001, 4001)


@pytest.fixture(scope="session")
def coarse_grid():
    return polar_grid(401, 1201)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
