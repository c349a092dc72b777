import math

import numpy as np
import pytest

from krasovskii.dynamics import InputAffineSystem, extend
from krasovskii.errors import DivergenceError, DomainExitError, MissingChannelError, NonFiniteError
from krasovskii.models import linear_system
from krasovskii.optim import build_primal_dual, random_quadratic_program
from krasovskii.passivity import storage_series
from krasovskii.sim import (Constant, PiecewiseConstant, SimConfig, Trajectory, convergence_metrics, integrate,
                            random_piecewise_constant, read_csv, rk4, verify_dissipation, zero)


def decay(t, z, w):
    return -z


def rk4_error(h):
    _, Z, _, _ = rk4(decay, [1.0], h, int(round(1.0 / h)))
    return abs(Z[-1, 0] - math.exp(-1.0))


def test_exponential_accuracy():
    assert rk4_error(0.01) <= 1e-9


def test_fourth_order():
    errs = [rk4_error(h) for h in (0.1, 0.05, 0.025)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(3.8 <= q <= 4.2 for q in orders), orders


def test_zero_field_is_constant():
    sys_ = InputAffineSystem(n=2, m=1, drift=lambda x: np.zeros(2), input_maps=lambda x: np.zeros((2, 1)))
    traj = integrate(sys_, SimConfig(1.0, 0.1, [3.0, -2.0]))
    assert np.all(traj.states == [3.0, -2.0])


def test_uniform_grid():
    _, sys_ = None, linear_system(-np.eye(1), np.ones((1, 1)))
    traj = integrate(sys_, SimConfig(1.0, 0.01, [1.0]))
    assert np.max(np.abs(np.diff(traj.times) - 0.01)) <= 1e-12
    assert len(traj.times) == len(traj.states) == len(traj.inputs) == 101


def test_divergence_guard():
    sys_ = linear_system(np.eye(1), np.zeros((1, 1)))
    with pytest.raises(DivergenceError) as info:
        integrate(sys_, SimConfig(30.0, 0.01, [1.0]))
    assert abs(info.value.state[0]) > 1e9 and 20 < info.value.time < 22


def test_non_finite_guard():
    sys_ = InputAffineSystem(n=1, m=1, drift=lambda x: np.array([np.nan]), input_maps=lambda x: np.zeros((1, 1)))
    with pytest.raises(NonFiniteError):
        integrate(sys_, SimConfig(1.0, 0.1, [0.0]))


def test_domain_exit(rlc):
    _, sys_, _ = rlc
    with pytest.raises(DomainExitError) as info:
        integrate(extend(sys_), SimConfig(0.2, 1e-5, [0.0, 5.0, 5.0], Constant([-500.0])))
    assert info.value.time < 0.2


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(1.0, 0.0, [0.0])
    with pytest.raises(ValueError):
        SimConfig(0.001, 0.01, [0.0])
    with pytest.raises(ValueError):
        SimConfig(1.0, 0.1, [0.0], record_every=0)


def test_piecewise_constant_is_right_continuous():
    s = PiecewiseConstant([0.0, 1.0, 2.0], [[1.0], [2.0], [3.0]])
    assert s(0.0)[0] == 1.0 and s(0.999)[0] == 1.0 and s(1.0)[0] == 2.0 and s(7.0)[0] == 3.0
    with pytest.raises(ValueError):
        PiecewiseConstant([0.5, 1.0], [[1.0], [2.0]])


def test_random_schedule_switches_on_grid(rng):
    s = random_piecewise_constant(rng, 2, 1.0, 1e-3, 6, 5.0)
    assert len(s.times) == 6 and s.values.shape == (6, 2)
    np.testing.assert_allclose(s.times / 1e-3, np.round(s.times / 1e-3), atol=1e-9)
    assert np.all(np.abs(s.values) <= 5.0)


def test_held_input_sampled_once_per_step():
    seen = []
    sys_ = InputAffineSystem(n=1, m=1, drift=lambda x: np.zeros(1), input_maps=lambda x: np.ones((1, 1)))
    sig = PiecewiseConstant([0.0, 0.5], [[1.0], [-1.0]])
    traj = integrate(extend(sys_), SimConfig(1.0, 0.1, [0.0, 0.0], lambda t: seen.append(t) or sig(t)))
    # u integrates +1 for 0.5 s then -1: back to zero
    assert traj.inputs[-1, 0] == pytest.approx(0.0, abs=1e-12)
    assert traj.inputs[5, 0] == pytest.approx(0.5)
    assert traj.input_rates[5, 0] == -1.0 and traj.input_rates_left[5, 0] == 1.0


def test_csv_round_trip(tmp_path, boost):
    p, sys_, _ = boost
    traj = integrate(extend(sys_), SimConfig(0.001, 1e-5, [1.0, 20.0, 0.4], Constant([2.0])),
                     metric=np.diag([p.L, p.C]))
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    cols = read_csv(path)
    assert list(cols)[:6] == ["t", "x_I", "x_V", "u_u", "ud_u", "S_K"]
    for name, values in traj.columns():
        np.testing.assert_array_equal(cols[name], values)


def test_deterministic_runs(tmp_path, boost, rng):
    p, sys_, _ = boost
    sig = random_piecewise_constant(rng, 1, 0.01, 1e-5, 5, 5.0)
    paths = []
    for k in range(2):
        traj = integrate(extend(sys_), SimConfig(0.01, 1e-5, [1.0, 20.0, 0.4], sig), metric=np.diag([p.L, p.C]))
        paths.append(tmp_path / f"{k}.csv")
        traj.to_csv(paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_storage_channel_recomputes(boost):
    p, sys_, _ = boost
    Q = np.diag([p.L, p.C])
    traj = integrate(extend(sys_), SimConfig(0.001, 1e-5, [1.0, 20.0, 0.4], Constant([1.0])), metric=Q)
    np.testing.assert_array_equal(traj.channels["S_K"], storage_series(sys_, traj.metric, traj.states, traj.inputs))


def test_boost_random_rates_dissipate(boost, rng):
    p, sys_, _ = boost
    Q = np.diag([p.L, p.C])
    sig = random_piecewise_constant(rng, 1, 0.05, 1e-5, 8, 5.0)
    traj = integrate(extend(sys_), SimConfig(0.05, 1e-5, [1.0, 20.0, 0.4], sig))
    rep = verify_dissipation(traj, sys_, Q, 1e-6)
    assert rep.passed, rep.to_dict()


def test_primal_dual_zero_rate_dissipates():
    prog = random_quadratic_program(np.random.default_rng(3), 4, 2)
    sys_, Q = build_primal_dual(prog)
    traj = integrate(extend(sys_), SimConfig(5.0, 1e-3, np.r_[np.ones(6), np.zeros(4)], zero(4)))
    assert verify_dissipation(traj, sys_, Q).passed


def test_anti_stable_fails_with_locations():
    sys_ = linear_system(np.array([[0.5, 0.0], [0.0, 0.2]]), np.zeros((2, 1)))
    traj = integrate(extend(sys_), SimConfig(1.0, 0.01, [1.0, 1.0, 0.0]))
    rep = verify_dissipation(traj, sys_, np.eye(2))
    assert not rep.passed
    assert rep.violations[0] == 1 and rep.violations[-1] == len(traj) - 2


def test_verify_needs_rates_and_full_stride(boost):
    p, sys_, _ = boost
    traj = integrate(sys_, SimConfig(0.001, 1e-5, [1.0, 20.0], Constant([0.4])))
    with pytest.raises(MissingChannelError):
        verify_dissipation(traj, sys_, np.diag([p.L, p.C]))
    strided = integrate(extend(sys_), SimConfig(0.001, 1e-5, [1.0, 20.0, 0.4], zero(1), record_every=10))
    with pytest.raises(ValueError):
        verify_dissipation(strided, sys_, np.diag([p.L, p.C]))


def test_convergence_metrics():
    times = np.linspace(0, 1, 11)
    at = Trajectory(times=times, states=np.ones((11, 1)), inputs=np.zeros((11, 1)))
    assert convergence_metrics(at, ([1.0], [0.0]), 1e-3) == (0.0, 0.0)
    states = np.exp(-5 * times)[:, None]
    settle, err = convergence_metrics(Trajectory(times, states, np.zeros((11, 1))), ([0.0], [0.0]), 0.05)
    assert settle == pytest.approx(0.6) and err == pytest.approx(math.exp(-5))
    grow = Trajectory(times, np.exp(5 * times)[:, None], np.zeros((11, 1)))
    assert convergence_metrics(grow, ([0.0], [0.0]), 1.0)[0] == math.inf
    with pytest.raises(ValueError):
        convergence_metrics(at, ([1.0, 2.0], [0.0]), 1.0)
