"""Dynamic controller on the input rate, plant-controller loop, and system-system coupling.

Wiring used for the closed loop (``eta = u - u*``)::

    u_d = y_c = eta_dot,   u_c = -h_K + nu,   K1 eta_dot = -K2 eta + u_c

so ``u_d = K1^{-1} (K2 (u* - u) - h_K(x, u) + nu)``. With this sign the
storage ``S_d = |f|_Q^2 / 2 + eta^T K2 eta / 2`` obeys
``dS_d/dt = f^T Q_g0 f / 2 - u_d^T K1 u_d + u_d^T nu``, and ``u_d = 0`` is
exactly the second condition of the LaSalle set. ``gain_sign=-1`` flips the
proportional term, giving ``u_d = K (u - u*) - h_K`` for scalar gains; that
variant is kept for comparison only (its linearization at the default boost
operating point has an unstable slow mode).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as _k
from .dynamics import ExtendedSystem, InputAffineSystem, eval_vector_field
from .errors import DimensionError, DivergenceError, DomainExitError, MetricError, NonFiniteError
from .linalg import is_symmetric, min_eig
from .passivity import (DISSIPATION_TOL, StorageMetric, as_metric, output_series, prop1_terms,
                        residual_from_series, storage_series)
from .sim import SimConfig, Trajectory, integrate, judge_residual, rk4, zero

EQUILIBRIUM_TOL = 1e-10


def _spd(name, K):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != K.shape[1] or not is_symmetric(K) or min_eig(K) <= 0:
        raise ValueError(f"{name} must be symmetric positive definite")
    return K


@dataclass(frozen=True, eq=False)
class KrasovskiiController:
    """``-K1 eta_dot = K2 eta - u_c``, output ``y_c = eta_dot``; ``nu`` is the external input signal."""

    K1: np.ndarray
    K2: np.ndarray
    u_star: np.ndarray
    nu: Optional[object] = None

    def __post_init__(self):
        K1 = _spd("K1", self.K1)
        K2 = _spd("K2", self.K2)
        u_star = np.atleast_1d(np.asarray(self.u_star, dtype=float))
        if K1.shape != K2.shape or K1.shape[0] != u_star.size:
            raise DimensionError("K1, K2 and u_star must share the input dimension")
        object.__setattr__(self, "K1", K1)
        object.__setattr__(self, "K2", K2)
        object.__setattr__(self, "u_star", u_star)
        if self.nu is None:
            object.__setattr__(self, "nu", zero(u_star.size))

    @property
    def p(self):
        return self.u_star.size


def controller_output(ctrl: KrasovskiiController, eta, u_c):
    """``y_c = eta_dot = -K1^{-1} (K2 eta - u_c)``."""
    return -np.linalg.solve(ctrl.K1, ctrl.K2 @ np.asarray(eta, dtype=float) - np.asarray(u_c, dtype=float))


def controller_storage(ctrl: KrasovskiiController, eta) -> float:
    eta = np.asarray(eta, dtype=float)
    return 0.5 * float(eta @ ctrl.K2 @ eta)


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    plant: ExtendedSystem
    metric: StorageMetric
    controller: KrasovskiiController
    x_star: np.ndarray
    u_star: np.ndarray
    gain_sign: int = 1

    @property
    def base(self):
        return self.plant.base

    def supply_output(self, x, u):
        return np.asarray(self.base.input_maps(x)).T @ (self.metric.Q @ self.base.f(x, u))

    def rate(self, x, u, nu):
        """Input rate ``u_d`` commanded by the controller at ``(x, u)``."""
        c = self.controller
        drive = self.gain_sign * (c.K2 @ (self.u_star - u)) - self.supply_output(x, u) + nu
        return np.linalg.solve(c.K1, drive)

    def vector_field(self, z, nu=None):
        n = self.base.n
        z = np.asarray(z, dtype=float)
        nu = self.controller.nu(0.0) if nu is None else np.asarray(nu, dtype=float)
        x, u = z[:n], z[n:]
        return np.concatenate([self.base.f(x, u), self.rate(x, u, nu)])


def close_loop(ext: ExtendedSystem, Q, ctrl: KrasovskiiController, equilibrium, certificate=None,
               gain_sign: int = 1) -> ClosedLoopSystem:
    """Wire the controller to the extended plant around ``equilibrium = (x*, u*)``.

    ``Q`` must be positive definite (the storage doubles as a Lyapunov
    candidate). A supplied ``certificate`` that did not pass is rejected.
    """
    metric = as_metric(Q)
    base = ext.base
    if metric.n != base.n:
        raise DimensionError(f"metric is {metric.n}x{metric.n} but the plant has n={base.n}")
    if not metric.positive_definite:
        raise MetricError("closed-loop design needs a positive definite metric")
    if certificate is not None and not certificate.passed:
        raise ValueError("plant certificate did not pass on the operating region")
    if hasattr(equilibrium, "x_star"):
        x_star, u_star = equilibrium.x_star, equilibrium.u_star
    else:
        x_star, u_star = equilibrium
    x_star = np.asarray(x_star, dtype=float)
    u_star = np.atleast_1d(np.asarray(u_star, dtype=float))
    if ctrl.p != base.m:
        raise DimensionError(f"controller dimension {ctrl.p} != plant input dimension {base.m}")
    if not np.allclose(ctrl.u_star, u_star, rtol=0, atol=1e-12):
        raise ValueError("controller setpoint differs from the equilibrium input")
    res = float(np.linalg.norm(eval_vector_field(base, x_star, u_star)))
    if res > EQUILIBRIUM_TOL:
        raise ValueError(f"(x*, u*) is not an equilibrium: |f| = {res:.3e}")
    if gain_sign not in (1, -1):
        raise ValueError("gain_sign must be +1 or -1")
    return ClosedLoopSystem(plant=ext, metric=metric, controller=ctrl, x_star=x_star, u_star=u_star,
                            gain_sign=gain_sign)


def closed_loop_storage(cl: ClosedLoopSystem, x, u) -> float:
    """``|f(x, u)|_Q^2 / 2 + (u* - u)^T K2 (u* - u) / 2``."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    f = eval_vector_field(cl.base, x, u)
    return 0.5 * float(f @ cl.metric.Q @ f) + controller_storage(cl.controller, cl.u_star - u)


def invariant_set_residual(cl: ClosedLoopSystem, x, u):
    """``(f^T Q_g0(x) f, K2 (u* - u) - g(x)^T Q f(x, u))``; both vanish on the LaSalle set."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    f = eval_vector_field(cl.base, x, u)
    Qg0, _ = prop1_terms(cl.base, cl.metric, x)
    return float(f @ Qg0 @ f), cl.controller.K2 @ (cl.u_star - u) - cl.supply_output(x, u)


def _constant_nu(nu):
    return getattr(nu, "value", None) if nu.__class__.__name__ == "Constant" else None


def _run_compiled(cl: ClosedLoopSystem, cfg: SimConfig, nu_value):
    base = cl.base
    model, p = base.kernel
    n, m = base.n, base.m
    rec, count, status, step = _k.run_closed_loop(
        model, np.ascontiguousarray(p, dtype=float), n, m, np.ascontiguousarray(cl.metric.Q),
        np.ascontiguousarray(np.linalg.inv(cl.controller.K1)), np.ascontiguousarray(cl.controller.K2),
        np.ascontiguousarray(cl.u_star), np.ascontiguousarray(nu_value, dtype=float), float(cl.gain_sign),
        np.ascontiguousarray(cfg.x0), cfg.h, cfg.n_steps, cfg.record_every)
    Z = rec[:count]
    if status != _k.OK:
        t = step * cfg.h
        err = {_k.DIVERGED: DivergenceError, _k.LEFT_DOMAIN: DomainExitError,
               _k.NON_FINITE: NonFiniteError}[status]
        raise err(f"closed-loop integration aborted at t={t:.6g} ({err.__name__})", time=t, state=Z[-1])
    idx = np.arange(count) * cfg.record_every
    idx[-1] = min(idx[-1], cfg.n_steps)
    return idx * cfg.h, Z


@integrate.register
def _(system: ClosedLoopSystem, cfg: SimConfig, metric=None, stop=None, compiled: Optional[bool] = None):
    cl, base = system, system.base
    n = base.n
    if cfg.x0.shape != (n + base.m,):
        raise ValueError(f"closed-loop initial state must have {n + base.m} entries (x, u)")
    nu = cfg.signal if cfg.signal is not None else cl.controller.nu
    nu_value = _constant_nu(nu)
    use_kernel = base.kernel is not None and nu_value is not None and stop is None
    if compiled is True and not use_kernel:
        raise ValueError("compiled closed-loop integration needs a model kernel and a constant nu")
    if use_kernel and compiled is not False:
        times, Z = _run_compiled(cl, cfg, nu_value)
        NU = np.tile(nu_value, (len(times), 1))
        NU_left = None
    else:
        domain = None if base.domain is None else (lambda z: base.domain(z[:n]))
        times, Z, NU, NU_left = rk4(lambda t, z, w: cl.vector_field(z, w), cfg.x0, cfg.h, cfg.n_steps,
                                    hold=nu, record_every=cfg.record_every, domain=domain, stop=stop)
        if np.array_equal(NU, NU_left):
            NU_left = None
    X, U = Z[:, :n], Z[:, n:]
    traj = Trajectory(times=times, states=X, inputs=U, state_labels=base.state_labels,
                      input_labels=base.input_labels, metric=cl.metric.Q, stride=cfg.record_every)
    ud = np.array([cl.rate(x, u, w) for x, u, w in zip(X, U, NU)])
    traj.input_rates = ud
    traj.channels["S_K"] = storage_series(base, cl.metric, X, U)
    traj.channels["h_K"] = output_series(base, cl.metric, X, U)
    eta = U - cl.u_star
    traj.channels["S_d"] = traj.channels["S_K"] + 0.5 * np.einsum("ij,jk,ik->i", eta, cl.controller.K2, eta)
    quad, vec = zip(*(invariant_set_residual(cl, x, u) for x, u in zip(X, U)))
    traj.channels["inv_quad"] = np.array(quad)
    traj.channels["inv_vec"] = np.array(vec)
    traj.channels["nu"] = NU
    if NU_left is not None:
        traj.channels["ud_left"] = np.array([cl.rate(x, u, w) for x, u, w in zip(X, U, NU_left)])
        traj.channels["nu_left"] = NU_left
    return traj


def closed_loop_dissipation(traj: Trajectory, tol=DISSIPATION_TOL):
    """``u_d^T nu - dS_d/dt >= -tol * max S_d`` on a closed-loop trajectory."""
    S = traj.channels["S_d"]
    r = residual_from_series(traj.times, S, traj.input_rates, traj.channels["nu"],
                             traj.channels.get("ud_left"), traj.channels.get("nu_left"))
    return judge_residual(r, np.max(np.abs(S)), tol)


def storage_monotonicity(series, tol=DISSIPATION_TOL):
    """Largest step increase of a storage series relative to its maximum, and pass flag."""
    series = np.asarray(series, dtype=float)
    scale = float(np.max(np.abs(series))) or 1.0
    worst = float(np.max(np.diff(series), initial=-np.inf)) / scale
    return worst, worst <= tol


# -- system-system interconnection ---------------------------------------------

@dataclass(frozen=True, eq=False)
class Interconnection:
    """Two extended systems coupled by ``u_d1 = -h_K2 + e_d1``, ``u_d2 = h_K1 + e_d2``.

    ``system`` is the joint input-affine system over ``(x1, u1, x2, u2)``
    driven by ``(e_d1, e_d2)``; ``metric`` is ``diag(Q1, 0, Q2, 0)`` so that
    the joint storage ``S_K1 + S_K2`` is ``storage(system, metric, z, e)``.
    """

    first: InputAffineSystem
    Q1: np.ndarray
    second: InputAffineSystem
    Q2: np.ndarray
    system: InputAffineSystem
    metric: StorageMetric

    def __iter__(self):
        return iter((self.system, self.metric))

    def split(self, z):
        n1, m, n2 = self.first.n, self.first.m, self.second.n
        z = np.asarray(z, dtype=float)
        return z[:n1], z[n1:n1 + m], z[n1 + m:n1 + m + n2], z[n1 + m + n2:]

    def outputs(self, z):
        x1, u1, x2, u2 = self.split(z)
        h1 = np.asarray(self.first.input_maps(x1)).T @ (self.Q1 @ self.first.f(x1, u1))
        h2 = np.asarray(self.second.input_maps(x2)).T @ (self.Q2 @ self.second.f(x2, u2))
        return h1, h2

    def storage(self, z):
        x1, u1, x2, u2 = self.split(z)
        f1, f2 = self.first.f(x1, u1), self.second.f(x2, u2)
        return 0.5 * float(f1 @ self.Q1 @ f1) + 0.5 * float(f2 @ self.Q2 @ f2)


def interconnect(sysA: InputAffineSystem, QA, sysB: InputAffineSystem, QB, certificates=None) -> Interconnection:
    if sysA.m != sysB.m:
        raise DimensionError(f"input dimensions differ: {sysA.m} vs {sysB.m}")
    if certificates is not None and not all(c.passed for c in certificates):
        raise ValueError("both subsystems need passing certificates")
    Q1, Q2 = as_metric(QA).Q, as_metric(QB).Q
    if Q1.shape[0] != sysA.n or Q2.shape[0] != sysB.n:
        raise DimensionError("metric sizes do not match the subsystems")
    n1, n2, m = sysA.n, sysB.n, sysA.m
    N = n1 + m + n2 + m

    def parts(z):
        return z[:n1], z[n1:n1 + m], z[n1 + m:n1 + m + n2], z[n1 + m + n2:]

    def drift(z):
        x1, u1, x2, u2 = parts(z)
        f1, f2 = sysA.f(x1, u1), sysB.f(x2, u2)
        h1 = np.asarray(sysA.input_maps(x1)).T @ (Q1 @ f1)
        h2 = np.asarray(sysB.input_maps(x2)).T @ (Q2 @ f2)
        return np.concatenate([f1, -h2, f2, h1])

    E = np.zeros((N, 2 * m))
    E[n1:n1 + m, :m] = np.eye(m)
    E[n1 + m + n2:, m:] = np.eye(m)

    def domain(z):
        x1, _, x2, _ = parts(z)
        return (sysA.domain is None or sysA.domain(x1)) and (sysB.domain is None or sysB.domain(x2))

    labels = tuple(f"A_{s}" for s in sysA.state_labels + sysA.input_labels) + \
        tuple(f"B_{s}" for s in sysB.state_labels + sysB.input_labels)
    joint = InputAffineSystem(
        n=N, m=2 * m, drift=drift, input_maps=lambda z: E, name=f"{sysA.name}+{sysB.name}",
        state_labels=labels,
        input_labels=tuple(f"A_ed{i + 1}" for i in range(m)) + tuple(f"B_ed{i + 1}" for i in range(m)),
        domain=domain if (sysA.domain or sysB.domain) else None,
    )
    Qj = np.zeros((N, N))
    Qj[:n1, :n1] = Q1
    Qj[n1 + m:n1 + m + n2, n1 + m:n1 + m + n2] = Q2
    return Interconnection(first=sysA, Q1=Q1, second=sysB, Q2=Q2, system=joint, metric=StorageMetric(Qj))


@integrate.register
def _(system: Interconnection, cfg: SimConfig, metric=None, stop=None):
    ic, joint = system, system.system
    if cfg.x0.shape != (joint.n,):
        raise ValueError(f"joint initial state must have {joint.n} entries")
    sig = cfg.signal if cfg.signal is not None else zero(joint.m)
    times, Z, W, WL = rk4(lambda t, z, w: joint.f(z, w), cfg.x0, cfg.h, cfg.n_steps, hold=sig,
                          record_every=cfg.record_every, domain=joint.domain, stop=stop)
    n1, m, n2 = ic.first.n, ic.first.m, ic.second.n
    X = np.hstack([Z[:, :n1], Z[:, n1 + m:n1 + m + n2]])
    U = np.hstack([Z[:, n1:n1 + m], Z[:, n1 + m + n2:]])
    traj = Trajectory(
        times=times, states=X, inputs=U, input_rates=W, input_rates_left=WL,
        state_labels=tuple(f"A_{s}" for s in ic.first.state_labels) + tuple(f"B_{s}" for s in ic.second.state_labels),
        input_labels=tuple(f"A_{s}" for s in ic.first.input_labels) + tuple(f"B_{s}" for s in ic.second.input_labels),
        metric=ic.metric.Q, stride=cfg.record_every, rate_prefix="ed",
    )
    traj.channels["S_K"] = np.array([ic.storage(z) for z in Z])
    hs = [ic.outputs(z) for z in Z]
    traj.channels["h_K_A"] = np.array([h[0] for h in hs])
    traj.channels["h_K_B"] = np.array([h[1] for h in hs])
    return traj


def interconnection_dissipation(traj: Trajectory, tol=DISSIPATION_TOL):
    """``e_d1^T h_K1 + e_d2^T h_K2 - d(S_K1 + S_K2)/dt >= -tol * max S`` at interior samples."""
    if traj.rates_held and traj.stride > 1:
        raise ValueError("held input rates must be recorded at every step to difference the storage")
    S = traj.channels["S_K"]
    H = np.hstack([traj.channels["h_K_A"], traj.channels["h_K_B"]])
    r = residual_from_series(traj.times, S, traj.input_rates, H, traj.input_rates_left)
    return judge_residual(r, np.max(np.abs(S)), tol)
