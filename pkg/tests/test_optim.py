import numpy as np
import pytest
from hypothesis import given, strategies as st

from krasovskii.dynamics import eval_vector_field
from krasovskii.errors import DimensionError, RankError
from krasovskii.optim import (ConvexProgram, build_primal_dual, kkt_residual, kkt_stop, lagrangian,
                              quadratic_program, random_quadratic_program, solve_kkt_direct, stated_supply_output)
from krasovskii.passivity import RegionSampler, check_prop1, supply_output


def half_norm(A=((1.0, 1.0),), b=(1.0,)):
    return quadratic_program(np.eye(2), np.zeros(2), np.array(A), np.array(b))


def test_lagrangian():
    prog = half_norm()
    assert lagrangian(prog, [0.0, 0.0], [3.0]) == -3.0
    assert lagrangian(prog, [0.3, 0.4], [0.0]) == pytest.approx(0.125)
    assert lagrangian(prog, [0.25, 0.75], [17.0]) == pytest.approx(prog.F(np.array([0.25, 0.75])))


def test_kkt_residual_examples():
    prog = half_norm()
    assert kkt_residual(prog, [0.5, 0.5], [-0.5]) == (0.0, 0.0)
    prog2 = half_norm(A=((1.0, 0.0),), b=(1.0,))
    assert kkt_residual(prog2, [1.25, 0.0], [-1.25])[1] == pytest.approx(0.25)
    free = quadratic_program(np.diag([2.0, 4.0]), [2.0, -4.0])
    assert kkt_residual(free, [-1.0, 1.0], np.zeros(0))[0] == 0.0


def test_dimension_check():
    with pytest.raises(DimensionError):
        kkt_residual(half_norm(), [0.0], [0.0])


def test_direct_solve():
    sol = solve_kkt_direct(half_norm())
    np.testing.assert_allclose(sol.x_star, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(sol.lambda_star, [-0.5], atol=1e-15)
    P, q = np.diag([2.0, 5.0]), np.array([1.0, -3.0])
    np.testing.assert_allclose(solve_kkt_direct(quadratic_program(P, q)).x_star, -np.linalg.solve(P, q))


def test_rank_deficient_constraints():
    with pytest.raises(RankError):
        half_norm(A=((1.0, 1.0), (2.0, 2.0)), b=(1.0, 2.0))


def test_time_constants_must_be_spd():
    with pytest.raises(RankError):
        quadratic_program(np.eye(2), np.zeros(2), tau_x=np.diag([1.0, -1.0]))


def test_nonconvex_objective_rejected():
    with pytest.raises(ValueError):
        quadratic_program(np.diag([1.0, -1.0]), np.zeros(2))


@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(0, 4))
def test_direct_solution_residuals(seed, n, m):
    m = min(m, n)
    prog = random_quadratic_program(np.random.default_rng(seed), n, m)
    sol = solve_kkt_direct(prog)
    assert max(kkt_residual(prog, sol.x_star, sol.lambda_star)) <= 1e-10


def test_flow_structure_unconstrained():
    prog = quadratic_program(np.eye(3), np.zeros(3))
    sys_, Q = build_primal_dual(prog)
    x, u = np.array([1.0, -2.0, 0.5]), np.array([0.1, 0.2, 0.3])
    np.testing.assert_allclose(eval_vector_field(sys_, x, u), -x - u)
    np.testing.assert_array_equal(Q.Q, np.eye(3))


def test_flow_vanishes_at_kkt_point():
    prog = random_quadratic_program(np.random.default_rng(2), 5, 2)
    sys_, _ = build_primal_dual(prog)
    sol = solve_kkt_direct(prog)
    z = np.concatenate([sol.x_star, sol.lambda_star])
    np.testing.assert_allclose(eval_vector_field(sys_, z, np.zeros(5)), 0.0, atol=1e-12)


def test_flow_certificate():
    prog = quadratic_program(np.array([[2.0, 0.5], [0.5, 1.0]]), [1.0, 0.0], np.array([[1.0, 2.0]]), [1.0],
                             tau_x=np.diag([0.5, 2.0]), tau_lam=np.array([[3.0]]))
    sys_, Q = build_primal_dual(prog)
    sampler = RegionSampler(-5 * np.ones(5), 5 * np.ones(5), n_state=3, samples=50)
    cert = check_prop1(sys_, Q, sampler)
    assert cert.passed
    # Q_g0 = diag(-2 P, 0): the worst eigenvalue is 0 from the multiplier block
    assert cert.worst_max_eig == pytest.approx(0.0, abs=1e-12)


def test_supply_output_sign_convention():
    prog = half_norm()
    sys_, Q = build_primal_dual(prog)
    x, lam, u = np.array([0.2, -0.1]), np.array([0.4]), np.array([0.3, 0.0])
    xdot = eval_vector_field(sys_, np.concatenate([x, lam]), u)[:2]
    stated = stated_supply_output(prog, x, lam, u)
    np.testing.assert_allclose(stated, xdot)
    np.testing.assert_allclose(supply_output(sys_, Q, np.concatenate([x, lam]), u), -stated)


def test_kkt_stop_patience():
    prog = half_norm()
    stop = kkt_stop(prog, tol=1e-8, patience=3)
    at = np.array([0.5, 0.5, -0.5])
    assert [stop(0.0, at) for _ in range(3)] == [False, False, True]
    stop = kkt_stop(prog, tol=1e-8, patience=2)
    assert not stop(0.0, at) and not stop(0.0, at + 1.0) and not stop(0.0, at)


def test_generic_program():
    # F = sum(exp(x)) + |x|^2 / 2 is strictly convex
    prog = ConvexProgram(F=lambda x: np.sum(np.exp(x)) + 0.5 * x @ x, grad=lambda x: np.exp(x) + x,
                         hess=lambda x: np.diag(np.exp(x)) + np.eye(len(x)), A=np.array([[1.0, 1.0]]),
                         b=np.array([0.0]), tau_x=np.eye(2), tau_lam=np.eye(1))
    with pytest.raises(ValueError):
        solve_kkt_direct(prog)
    sys_, Q = build_primal_dual(prog)
    assert sys_.n == 3 and Q.positive_definite
