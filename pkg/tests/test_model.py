import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdtbound.errors import AssumptionError, ValidationError
from cdtbound.model import (
    CdtInstance, boundary_correction_gamma, check_interior_assumption, ellipsoid_value, example1,
    lambda_hat, perturb_cut, project_to_boundary, supporting_cut,
)

from conftest import ellipse_boundary, polar_grid, quad_values


def random_instance(rng, n=2, a0_shift=None):
    M = rng.standard_normal((n, n))
    Q = 0.5 * (M + M.T) * 3
    W = rng.standard_normal((n, n))
    A = W @ W.T + 0.5 * np.eye(n)
    a = 0.5 * rng.standard_normal(n)
    inst0 = CdtInstance(Q, rng.standard_normal(n), A, a, 0.0)
    ell = check_interior_assumption(inst0).ell_a
    a0 = ell + (rng.uniform(0.2, 2.0) if a0_shift is None else a0_shift)
    return CdtInstance(Q, inst0.q, A, a, a0)


def test_validation():
    with pytest.raises(ValidationError):
        CdtInstance(np.eye(2), np.zeros(2), np.diag([1.0, -1.0]), np.zeros(2), 1.0)
    with pytest.raises(ValidationError):
        CdtInstance([[1, 2], [0, 1]], np.zeros(2), np.eye(2), np.zeros(2), 1.0)
    with pytest.raises(ValidationError):
        CdtInstance(np.eye(2), [np.nan, 0], np.eye(2), np.zeros(2), 1.0)
    with pytest.raises(ValidationError):
        CdtInstance(np.eye(3), np.zeros(2), np.eye(2), np.zeros(2), 1.0)


def test_ellipsoid_value_examples():
    e = example1()
    assert ellipsoid_value(e, np.zeros(2)) == 0.0
    assert ellipsoid_value(e, [-0.911, 0.4114]) == pytest.approx(2.659, abs=2e-3)
    assert ellipsoid_value(e, [-0.7901, 0.3565]) == pytest.approx(2.0, abs=1e-3)


def test_interior_assumption():
    info = check_interior_assumption(example1())
    assert info.ell_a == 0 and info.satisfied
    np.testing.assert_array_equal(info.argmin_z, 0)
    bad = CdtInstance(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), -1.0)
    assert not check_interior_assumption(bad).satisfied
    with pytest.raises(AssumptionError):
        lambda_hat(bad)


def test_interior_value_matches_grid():
    rng = np.random.default_rng(1)
    P = polar_grid(1001, 2001)
    for _ in range(10):
        inst = random_instance(rng)
        oracle = quad_values(inst.A, inst.a, P).min()
        assert abs(check_interior_assumption(inst).ell_a - oracle) <= 1e-3


def test_lambda_hat():
    inst = CdtInstance(np.zeros((2, 2)), np.zeros(2), np.eye(2), np.zeros(2), 1.0)
    assert lambda_hat(inst) == 0.0
    inst = CdtInstance(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), 2.0)
    assert lambda_hat(inst) == pytest.approx(0.5)
    e = example1()
    P = polar_grid(2001, 4001)
    f = quad_values(e.Q, e.q, P)
    assert lambda_hat(e) == pytest.approx((f.max() - f.min()) / 2.0, abs=1e-3)


def test_lambda_hat_scaling():
    rng = np.random.default_rng(2)
    for _ in range(10):
        inst = random_instance(rng)
        s = rng.uniform(0.1, 10)
        scaled = CdtInstance(s * inst.Q, s * inst.q, inst.A, inst.a, inst.a0)
        assert lambda_hat(scaled) == pytest.approx(s * lambda_hat(inst), rel=1e-10)


def test_projection_examples():
    e = example1()
    x = project_to_boundary(e, np.array([-0.911, 0.4114]))
    np.testing.assert_allclose(x, [-0.7901, 0.3565], atol=1e-3)
    sph = CdtInstance(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), 1.0)
    for metric in ("ellipsoid", "euclidean"):
        np.testing.assert_allclose(project_to_boundary(sph, np.array([2.0, 0.0]), metric), [1, 0], atol=1e-14)
    with pytest.raises(ValueError):
        project_to_boundary(e, np.zeros(2))


def test_euclidean_projection_matches_boundary_search():
    rng = np.random.default_rng(3)
    for _ in range(10):
        inst = random_instance(rng)
        B = ellipse_boundary(inst.A, inst.a, inst.a0, m=1_000_000)
        v = B[rng.integers(len(B))] * rng.uniform(1.2, 2.0) + 0.1 * rng.standard_normal(2)
        if ellipsoid_value(inst, v) <= inst.a0:
            continue
        x = project_to_boundary(inst, v, metric="euclidean")
        near = B[np.argmin(np.linalg.norm(B - v, axis=1))]
        assert np.linalg.norm(x - near) <= 1e-4
        assert ellipsoid_value(inst, x) == pytest.approx(inst.a0, abs=1e-10)


def test_projection_idempotent():
    rng = np.random.default_rng(4)
    for metric in ("ellipsoid", "euclidean"):
        for _ in range(20):
            inst = random_instance(rng)
            v = rng.standard_normal(2) * 5
            if ellipsoid_value(inst, v) <= inst.a0:
                continue
            x = project_to_boundary(inst, v, metric)
            c = -0.5 * np.linalg.solve(inst.A, inst.a)
            x2 = project_to_boundary(inst, x + 1e-9 * (x - c), metric)
            assert np.linalg.norm(x2 - x) <= 1e-8


def test_supporting_cut_examples():
    e = example1()
    xbar = project_to_boundary(e, np.array([-0.911, 0.4114]))
    cut = supporting_cut(e, xbar)
    np.testing.assert_allclose(cut.normal, [-4.7406, 0.713], atol=2e-3)
    sph = CdtInstance(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), 1.0)
    cut = supporting_cut(sph, np.array([1.0, 0.0]))
    np.testing.assert_array_equal(cut.normal, [2, 0])
    assert cut.slack(np.array([0.999, 5.0])) < 0 and cut.slack(np.array([1.001, 0.0])) > 0
    with pytest.raises(ValueError):
        supporting_cut(e, np.zeros(2))


def test_cut_contains_ellipsoid():
    rng = np.random.default_rng(5)
    for _ in range(10):
        inst = random_instance(rng, n=3)
        v = rng.standard_normal(3) * 10
        xbar = project_to_boundary(inst, v)
        cut = supporting_cut(inst, xbar)
        # rejection-sample points of E
        c = -0.5 * np.linalg.solve(inst.A, inst.a)
        P = c + rng.uniform(-3, 3, (40_000, 3))
        inside = P[quad_values(inst.A, inst.a, P) <= inst.a0][:10_000]
        assert len(inside) > 100
        assert ((inside - xbar) @ cut.normal / np.linalg.norm(cut.normal)).max() <= 1e-10


def test_gamma_examples():
    sph = CdtInstance(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), 1.0)
    g = boundary_correction_gamma(sph, np.array([1.0, 0.0]), np.array([1.0, 1.0]), 1.0)
    assert g == pytest.approx(0.5)
    e = example1()
    xbar = project_to_boundary(e, np.array([-0.911, 0.4114]))
    n = 2 * e.A @ xbar
    v = xbar + 0.4 * np.array([-n[1], n[0]]) / np.linalg.norm(n)  # active at the cut
    assert 0 <= boundary_correction_gamma(e, xbar, v, 1e-8) <= 1e-6


def test_perturb_cut_on_boundary():
    e = example1()
    xbar = project_to_boundary(e, np.array([-0.911, 0.4114]))
    cut = supporting_cut(e, xbar)
    # a point on the cut line, as the one-cut witness is
    t = np.array([-cut.normal[1], cut.normal[0]])
    v = xbar + 0.3 * t / np.linalg.norm(t)
    y = perturb_cut(e, cut, v, 1.0)
    assert abs(ellipsoid_value(e, y) - e.a0) <= 1e-8
    y0 = perturb_cut(e, cut, v, 1e-8)
    assert np.linalg.norm(y0 - xbar) <= 1e-6
    with pytest.raises(ValueError):
        perturb_cut(e, cut, v + cut.normal, 1.0)


def test_perturb_halving_terminates():
    rng = np.random.default_rng(6)
    for _ in range(30):
        inst = random_instance(rng)
        xbar = project_to_boundary(inst, rng.standard_normal(2) * 10)
        cut = supporting_cut(inst, xbar)
        t = np.array([-cut.normal[1], cut.normal[0]])
        v = xbar + rng.uniform(0.1, 1.0) * t / np.linalg.norm(t)
        eta = 1.0
        for _ in range(61):
            y = perturb_cut(inst, cut, v, eta)
            if y is not None and (2 * inst.A @ y + inst.a) @ (v - y) > 0:
                break
            eta *= 0.5
        else:
            pytest.fail("no violating anchor after 60 halvings")


@settings(max_examples=50, deadline=None)
@given(st.floats(0.3, 3), st.floats(0.3, 3), st.floats(0.05, 2), st.floats(0, 2 * np.pi))
def test_gamma_property(s1, s2, a0, theta):
    inst = CdtInstance(np.zeros((2, 2)), np.zeros(2), np.diag([s1, s2]), np.zeros(2), a0)
    xbar = np.array([np.cos(theta) * np.sqrt(a0 / s1), np.sin(theta) * np.sqrt(a0 / s2)])
    n = 2 * inst.A @ xbar
    v = xbar + np.array([-n[1], n[0]])
    eta = 1.0
    g = boundary_correction_gamma(inst, xbar, v, eta)
    while g is None:  # a long tangent step can leave a line that misses E
        eta *= 0.5
        g = boundary_correction_gamma(inst, xbar, v, eta)
    assert g >= 0
    y = xbar + eta * (v - xbar) - g * n
    assert ellipsoid_value(inst, y) == pytest.approx(a0, abs=1e-9 * (1 + a0))
