import numpy as np
import pytest
from hypothesis import given, strategies as st

from krasovskii.dynamics import (InputAffineSystem, eval_jacobians, eval_vector_field, extend, fd_step,
                                 find_equilibrium, jacobian_x)
from krasovskii.errors import ConvergenceError, DimensionError, DomainError, SolverError
from krasovskii.models import linear_system, rlc_equilibrium_voltages


def decay_with_push():
    # g0(x) = -x, g1 = e1
    return InputAffineSystem(n=2, m=1, drift=lambda x: -np.asarray(x), input_maps=lambda x: np.array([[1.0], [0.0]]))


def test_vector_field_arithmetic():
    assert eval_vector_field(decay_with_push(), [1.0, 0.0], [2.0]).tolist() == [1.0, 0.0]


def test_zero_input_is_drift(boost):
    _, sys_, _ = boost
    x = np.array([1.3, 17.0])
    np.testing.assert_array_equal(eval_vector_field(sys_, x, [0.0]), sys_.drift(x))


def test_dimension_errors():
    sys_ = decay_with_push()
    with pytest.raises(DimensionError):
        eval_vector_field(sys_, [1.0], [0.0])
    with pytest.raises(DimensionError):
        eval_vector_field(sys_, [1.0, 0.0], [0.0, 1.0])
    bad = InputAffineSystem(n=2, m=1, drift=lambda x: -x, input_maps=lambda x: np.ones((2, 2)))
    with pytest.raises(DimensionError):
        eval_vector_field(bad, [1.0, 0.0], [0.0])


def test_labels_default_and_checked():
    assert decay_with_push().state_labels == ("x1", "x2")
    with pytest.raises(DimensionError):
        InputAffineSystem(n=2, m=1, drift=None, input_maps=None, state_labels=("a",))


def test_boost_equilibrium_residual(boost, boost_eq):
    _, sys_, _ = boost
    assert np.linalg.norm(eval_vector_field(sys_, boost_eq.x_star, boost_eq.u_star)) <= 1e-9


def test_boost_drift_jacobian(boost):
    p, sys_, _ = boost
    jac = eval_jacobians(sys_, np.array([3.0, 10.0]))
    np.testing.assert_allclose(jac.drift, [[-p.R / p.L, -1 / p.L], [1 / p.C, -p.G / p.C]], rtol=1e-6)
    assert not jac.finite_difference


def test_constant_field_has_zero_jacobian():
    sys_ = InputAffineSystem(n=2, m=1, drift=lambda x: np.array([1.0, 2.0]), input_maps=lambda x: np.ones((2, 1)))
    jac = eval_jacobians(sys_, np.array([0.3, -4.0]))
    assert jac.finite_difference
    np.testing.assert_allclose(jac.drift, 0.0, atol=1e-9)
    np.testing.assert_allclose(jac.inputs, 0.0, atol=1e-9)


def test_rlc_analytic_matches_fd_at_low_voltage(rlc):
    _, sys_, _ = rlc
    x = np.array([0.2, 1.0])
    a, fd = eval_jacobians(sys_, x), eval_jacobians(sys_, x, force_fd=True)
    assert np.max(np.abs(a.drift - fd.drift)) <= 1e-6 * np.max(np.abs(a.drift))


def test_fd_step_scales_with_norm():
    assert fd_step(np.zeros(3)) == pytest.approx(1e-6)
    assert fd_step(np.array([300.0, 400.0])) == pytest.approx(5e-4)


def test_fd_outside_domain_is_domain_error(rlc):
    _, sys_, _ = rlc
    no_jac = InputAffineSystem(n=2, m=1, drift=sys_.drift, input_maps=sys_.input_maps)
    with pytest.raises(DomainError):
        eval_jacobians(no_jac, np.array([0.0, 1e-9]))


@given(st.floats(-5, 5), st.floats(0.5, 40), st.floats(0, 1), st.floats(-100, 100))
def test_extended_field_components(I, V, u, ud):
    from krasovskii.models import boost_converter
    sys_, _ = boost_converter()
    ext = extend(sys_)
    z = np.array([I, V, u])
    out = ext.vector_field(z, [ud])
    np.testing.assert_array_equal(out[:2], eval_vector_field(sys_, z[:2], z[2:]))
    assert out[2] == ud


def test_extend_dimensions(boost):
    ext = extend(boost[1])
    assert (ext.n, ext.m) == (3, 1)
    aff = ext.as_input_affine()
    z = np.array([1.0, 20.0, 0.4])
    np.testing.assert_array_equal(aff.f(z, np.array([0.0]))[2:], [0.0])


def test_extended_equilibrium(boost, boost_eq):
    ext = extend(boost[1])
    z = np.concatenate([boost_eq.x_star, boost_eq.u_star])
    assert np.linalg.norm(ext.vector_field(z, [0.0])) <= 1e-9


def test_newton_recovers_boost_equilibrium(boost, boost_eq):
    _, sys_, _ = boost
    eq = find_equilibrium(sys_, (boost_eq.x_star * 1.05, boost_eq.u_star), frozen=[False, False, True])
    assert eq.residual_norm <= 1e-10
    np.testing.assert_allclose(eq.x_star, boost_eq.x_star, rtol=1e-9)


def test_newton_linear():
    sys_ = linear_system(-np.eye(2), np.eye(2)[:, :1])
    eq = find_equilibrium(sys_, ([3.0, -1.0], [0.0]), frozen=[False, False, True])
    np.testing.assert_allclose(eq.x_star, 0.0, atol=1e-12)


def _bisect(fun, lo, hi, iters=200):
    flo = fun(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.sign(fun(mid)) == np.sign(flo):
            lo, flo = mid, fun(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_newton_rlc_matches_bracketed_root(rlc):
    p, sys_, _ = rlc
    u = 10.0
    # eliminate I = (u - V) / R and bracket the upper root of the capacitor balance
    balance = lambda V: (u - V) / p.R - p.G * V - p.P_bar / V - p.I_s  # noqa: E731
    V_root = _bisect(balance, 2.0, u)
    assert p.G * V_root**2 > p.P_bar
    eq = find_equilibrium(sys_, ([0.0, 8.0], [u]), frozen=[False, False, True])
    assert eq.x_star[1] == pytest.approx(V_root, rel=1e-10)
    assert eq.x_star[1] == pytest.approx(rlc_equilibrium_voltages(p, u)[0], rel=1e-10)


def test_newton_needs_square_system(boost):
    with pytest.raises(DimensionError):
        find_equilibrium(boost[1], ([1.0, 1.0], [0.5]))


def test_newton_singular_jacobian():
    sys_ = InputAffineSystem(n=1, m=1, drift=lambda x: np.array([x[0] ** 2 + 1.0]),
                             input_maps=lambda x: np.zeros((1, 1)))
    with pytest.raises(SolverError):
        find_equilibrium(sys_, ([0.0], [0.0]), frozen=[False, True])


def test_newton_no_root_reports_failure():
    sys_ = InputAffineSystem(n=1, m=1, drift=lambda x: np.array([x[0] ** 2 + 1.0]),
                             input_maps=lambda x: np.zeros((1, 1)))
    with pytest.raises((ConvergenceError, SolverError)):
        find_equilibrium(sys_, ([1.0], [0.0]), frozen=[False, True])


def test_jacobian_x_includes_input_columns(boost):
    p, sys_, _ = boost
    J = jacobian_x(sys_, np.array([1.0, 20.0]), np.array([0.3]))
    np.testing.assert_allclose(J, [[-p.R / p.L, -(1 - 0.3) / p.L], [(1 - 0.3) / p.C, -p.G / p.C]], rtol=1e-12)
