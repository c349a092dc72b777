import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from krasovskii.dynamics import eval_jacobians, eval_vector_field
from krasovskii.errors import DomainError, InfeasibleSetpointError, RegimeError
from krasovskii.models import (BoostParams, PortHamiltonianForm, RlcZipParams, boost_converter, boost_equilibrium,
                               in_set_b, linear_system, parallel_rlc_zip, rlc_equilibrium_voltages, set_b_boundary)


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        BoostParams(L=0.0)
    with pytest.raises(ValueError):
        RlcZipParams(P_bar=-1.0)


def test_boost_equations(boost):
    p, sys_, _ = boost
    I, V, u = 1.5, 20.0, 0.3
    f = eval_vector_field(sys_, [I, V], [u])
    assert f[0] == pytest.approx((-p.R * I - (1 - u) * V + p.Vs) / p.L, rel=1e-14)
    assert f[1] == pytest.approx(((1 - u) * I - p.G * V) / p.C, rel=1e-14)


def test_boost_representations_agree(boost, rng):
    _, sys_, phs = boost
    for _ in range(100):
        x = rng.uniform([-5, -5], [10, 60])
        u = rng.uniform(-1, 2, size=1)
        a, b = eval_vector_field(sys_, x, u), phs.vector_field(x, u)
        assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


def test_boost_full_duty_decouples_current(boost):
    _, sys_, _ = boost
    f1 = eval_vector_field(sys_, [1.0, 5.0], [1.0])
    f2 = eval_vector_field(sys_, [1.0, 50.0], [1.0])
    assert f1[0] == f2[0]


@given(st.floats(-5, 5), st.floats(0, 50), st.floats(0, 1))
def test_boost_energy_balance(I, V, u):
    p = BoostParams()
    sys_, phs = boost_converter(p)
    x = np.array([I, V])
    dH = phs.grad_h(x) @ eval_vector_field(sys_, x, np.array([u]))
    expected = -p.R * I**2 - p.G * V**2 + p.Vs * I
    assert dH == pytest.approx(expected, abs=1e-6)


def test_boost_equilibrium_default_point(boost, boost_eq):
    p, sys_, _ = boost
    a = 1.0 - boost_eq.u_star[0]
    # oracle: quadratic V a^2 - Vs a + R G V = 0, larger root
    a_ref = (p.Vs + math.sqrt(p.Vs**2 - 4 * 24.0**2 * p.R * p.G)) / (2 * 24.0)
    assert a == pytest.approx(a_ref, rel=1e-14)
    assert boost_eq.residual_norm <= 1e-10
    assert 0.0 <= boost_eq.u_star[0] <= 1.0
    a_hi, a_lo = boost_eq.metadata["roots"]
    assert a_hi > a_lo


def test_boost_double_root():
    p = BoostParams()
    V = p.Vs / (2 * math.sqrt(p.R * p.G))
    eq = boost_equilibrium(p, V)
    a_hi, a_lo = eq.metadata["roots"]
    assert a_hi == pytest.approx(a_lo, rel=1e-7)
    assert eq.residual_norm <= 1e-9


def test_boost_infeasible_and_regime():
    p = BoostParams()
    with pytest.raises(InfeasibleSetpointError):
        boost_equilibrium(p, 1e4)
    with pytest.raises(RegimeError):
        boost_equilibrium(p, 6.0)  # below Vs: would need u* < 0


def test_ph_validation():
    base = dict(J=np.zeros((0, 2, 2)), R=np.eye(2), G=np.zeros((2, 0)), u_s=np.zeros(0),
                hamiltonian=lambda x: 0.5 * x @ x, grad_h=lambda x: x, hess_h=lambda x: np.eye(2))
    PortHamiltonianForm(J0=np.array([[0.0, 1.0], [-1.0, 0.0]]), **base)
    with pytest.raises(ValueError):
        PortHamiltonianForm(J0=np.array([[0.0, 1.0], [1.0, 0.0]]), **base)
    with pytest.raises(ValueError):
        PortHamiltonianForm(J0=np.zeros((2, 2)), **{**base, "R": -np.eye(2)})


def test_rlc_equations(rlc):
    p, sys_, _ = rlc
    I, V, u = 0.4, 3.0, 7.0
    f = eval_vector_field(sys_, [I, V], [u])
    assert f[0] == pytest.approx((-p.R * I - V + u) / p.L, rel=1e-14)
    assert f[1] == pytest.approx((I - p.G * V - p.P_bar / V - p.I_s) / p.C, rel=1e-14)


def test_rlc_representations_agree(rlc, rng):
    _, sys_, gsys = rlc
    for _ in range(100):
        x = rng.uniform([-3, 0.05], [3, 40])
        u = rng.uniform(-20, 20, size=1)
        a, b = eval_vector_field(sys_, x, u), gsys.vector_field(x, u)
        assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


@given(st.floats(-3, 3), st.floats(0.01, 40), st.floats(-20, 20))
def test_rlc_energy_balance(I, V, u):
    p = RlcZipParams()
    sys_, _ = parallel_rlc_zip(p)
    f = eval_vector_field(sys_, np.array([I, V]), np.array([u]))
    dH = p.L * I * f[0] + p.C * V * f[1]
    expected = -p.R * I**2 - p.G * V**2 - p.P_bar + u * I - V * p.I_s
    assert dH == pytest.approx(expected, abs=1e-6)


def test_rlc_potential_hessian(rlc):
    p, _, gsys = rlc
    V = 2.5
    np.testing.assert_allclose(gsys.hess_p([0.1, V]), [[p.R, 1.0], [1.0, -p.G + p.P_bar / V**2]], rtol=1e-15)
    # oracle: central differences of the gradient
    x, h = np.array([0.1, V]), 1e-6
    fd = np.column_stack([(gsys.grad_p(x + h * e) - gsys.grad_p(x - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(gsys.hess_p(x), fd, rtol=1e-7)


def test_rlc_domain(rlc):
    _, sys_, gsys = rlc
    for V in (0.0, -1.0):
        with pytest.raises(DomainError):
            eval_vector_field(sys_, [0.0, V], [1.0])
        with pytest.raises(DomainError):
            gsys.potential([0.0, V])
    assert sys_.domain([0.0, 1e-9]) and not sys_.domain([0.0, 0.0])


def test_set_b():
    p = RlcZipParams(G=0.04, P_bar=0.1)
    assert in_set_b(p, [0.0, 2.0])
    assert in_set_b(p, [0.0, set_b_boundary(p)])
    assert not in_set_b(p, [0.0, 0.0])
    assert not in_set_b(p, [0.0, 0.99 * set_b_boundary(p)])


def test_rlc_equilibrium_voltages_solve_balance():
    p = RlcZipParams()
    for V in rlc_equilibrium_voltages(p, 10.0):
        I = (10.0 - V) / p.R
        assert I - p.G * V - p.P_bar / V - p.I_s == pytest.approx(0.0, abs=1e-12)


def test_linear_model_jacobians(rng):
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 2))
    sys_ = linear_system(A, B)
    x, u = rng.standard_normal(3), rng.standard_normal(2)
    np.testing.assert_allclose(eval_vector_field(sys_, x, u), A @ x + B @ u, rtol=1e-14)
    np.testing.assert_array_equal(eval_jacobians(sys_, x).drift, A)
