import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from curvedflats.errors import GridMismatch, GridTooSmall, WrongValueSpace
from curvedflats.grid import Grid, GridField, diff, interpolate_intervals
from curvedflats.lax import (
    ConnectionField,
    cartan_lift,
    curvature,
    curved_flat,
    flat_abelian,
    gauge,
    integrate_frame,
    lambda_derivative_at_zero,
    parallel_frame,
    uu0_residual,
)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_diff_exact_on_quartics(coeffs):
    x = np.linspace(-1, 1, 21)
    p = np.polynomial.Polynomial(coeffs)
    d = diff(p(x), 0, x[1] - x[0])
    assert np.allclose(d, p.deriv()(x), atol=1e-9 * (1 + np.max(np.abs(coeffs))))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(0.05, 0.95))
def test_interpolation_exact_on_cubics(coeffs, c):
    x = np.linspace(0, 2, 11)
    p = np.polynomial.Polynomial(coeffs)
    out = interpolate_intervals(p(x), 0, c)
    assert np.allclose(out, p(x[:-1] + c * (x[1] - x[0])), atol=1e-10 * (1 + np.max(np.abs(coeffs))))


def test_diff_fourth_order():
    errs = []
    for N in (33, 65):
        x = np.linspace(-1, 1, N)
        errs.append(np.max(np.abs(diff(np.sin(3 * x), 0, x[1] - x[0]) - 3 * np.cos(3 * x))))
    assert 12 < errs[0] / errs[1] < 20


def test_grid_validation():
    with pytest.raises(GridTooSmall):
        Grid.square(1.0, 7)
    with pytest.raises(GridMismatch):
        Grid.square(1.0, 10)
    with pytest.raises(GridMismatch):
        Grid(((0.1, 1.0), (-1.0, 1.0)), (9, 9))
    g = Grid.square(1.0, 9)
    with pytest.raises(GridMismatch):
        GridField(g, np.zeros((9, 8, 2, 2)))


def test_grid_refine_and_integrate():
    g = Grid(((-1.0, 2.0), (-0.5, 0.5)), (13, 9))
    assert g.refine().N == (25, 17)
    assert g.points[g.origin_index].tolist() == [0.0, 0.0]
    X, Y = g.points[..., 0], g.points[..., 1]
    assert np.isclose(g.integrate(X ** 3 * Y ** 2), (2 ** 4 - 1) / 4 * (2 * 0.5 ** 3 / 3))
    mask = g.interior(0.25)
    assert not mask[0].any() and mask[g.origin_index]


def test_check_space_rejects_wrong_values(pair3):
    g = Grid.square(1.0, 9)
    vals = np.broadcast_to(pair3.basis_U0[0], g.N + (3, 3))
    with pytest.raises(WrongValueSpace):
        GridField(g, vals, "U1").check_space(pair3)


def test_pure_gauge_has_zero_curvature(pair3):
    g = Grid.square(1.0, 33)
    X = pair3.basis_U1[0] * 0.7
    Y = pair3.basis_U0[1] * 0.4
    G = scipy.linalg.expm(g.points[..., 0, None, None] * X + g.points[..., 1, None, None] ** 2 * Y)
    C0 = ConnectionField(g, np.zeros((2,) + g.N + (3, 3), dtype=complex))
    C = gauge(GridField(g, G), C0)
    assert curvature(C).max < 1e-5


def test_constant_connection_frame_is_exponential(pair3):
    g = Grid.square(1.0, 17)
    lam = 0.8 - 0.3j
    a = pair3.basis_A
    coeffs = np.stack([np.broadcast_to(a[i] * lam, g.N + (3, 3)) for i in range(2)])
    F = integrate_frame(ConnectionField(g, coeffs), lam)
    x = g.points
    expected = scipy.linalg.expm(lam * (x[..., 0, None, None] * a[0] + x[..., 1, None, None] * a[1]))
    assert np.max(np.abs(F.values - expected)) < 1e-10
    assert np.allclose(F.at_origin(), np.eye(3))
    assert F.diagnostics["path_independence"] < 1e-10


def test_vacuum_constructions(pair3):
    g = Grid.square(1.0, 17)
    v = GridField(g, np.zeros(g.N + (3, 3), dtype=complex), "U1_perpA")
    assert uu0_residual(v, pair3).max == 0.0
    X = g.points[..., 0, None, None] * pair3.basis_A[0] + g.points[..., 1, None, None] * pair3.basis_A[1]
    psi = curved_flat(v, pair3)
    assert np.max(np.abs(psi.field.values - scipy.linalg.expm(2 * X))) < 1e-10
    Y = flat_abelian(v, pair3)
    assert np.max(np.abs(Y.field.values - X)) < 1e-10
    lift = cartan_lift(v, pair3)
    assert lift.diagnostics["bj_g"] < 1e-10


def test_non_solution_reports_large_residual(pair3):
    g = Grid.square(1.0, 33)
    x = g.points
    vals = np.sin(x[..., 0])[..., None, None] * pair3.basis_U1_perpA[0]
    v = GridField(g, vals, "U1_perpA")
    assert uu0_residual(v, pair3).max > 1e-2
    with pytest.warns(RuntimeWarning):
        parallel_frame(v, 1.0, pair3, warn_tol=1e-6)


def test_lambda_derivative_richardson():
    def frames(lam):
        return np.array([[np.exp(2 * lam) + lam ** 3]])

    est = lambda_derivative_at_zero(frames, delta=1e-1, levels=2)
    assert abs(est[0, 0] - 2.0) < 1e-8
