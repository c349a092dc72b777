"""Fixed-step RK4 integration, trajectory records, and trajectory checks."""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import ExtendedSystem, InputAffineSystem
from .errors import DivergenceError, DomainError, DomainExitError, MissingChannelError, NonFiniteError
from .passivity import DISSIPATION_TOL, as_metric, output_series, residual_from_series, storage_series

DIVERGENCE_BOUND = 1e9
CIRCUIT_STEP = 1e-5
FLOW_STEP = 1e-3


# -- exogenous signals (sampled once per step and held) -------------------

@dataclass(frozen=True, eq=False)
class Constant:
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.atleast_1d(np.asarray(self.value, dtype=float)))

    def __call__(self, t):
        return self.value


def zero(m):
    return Constant(np.zeros(m))


@dataclass(frozen=True, eq=False)
class PiecewiseConstant:
    """Right-continuous schedule: ``values[i]`` holds on ``[times[i], times[i+1])``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float)
        values = values.reshape(len(times), -1)
        if times.size == 0 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("schedule times must start at 0 and increase strictly")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __call__(self, t):
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(i, 0)]


def random_piecewise_constant(rng, m, t_end, h, pieces, bound):
    """Random schedule with ``pieces`` levels in ``[-bound, bound]^m``, switching on grid points."""
    n_steps = int(round(t_end / h))
    cuts = np.sort(rng.choice(np.arange(1, n_steps), size=pieces - 1, replace=False)) if pieces > 1 else []
    times = np.concatenate([[0.0], np.asarray(cuts, dtype=float) * h])
    return PiecewiseConstant(times, rng.uniform(-bound, bound, size=(pieces, m)))


# -- configuration and records -------------------------------------------

@dataclass(frozen=True, eq=False)
class SimConfig:
    """``x0`` is the full integrated state (``(x, u)`` for extended systems)."""

    t_end: float
    h: float
    x0: np.ndarray
    signal: Optional[Callable] = None
    record_every: int = 1

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step h must be positive")
        if not self.t_end >= self.h:
            raise ValueError("t_end must be at least one step")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))

    @property
    def n_steps(self):
        return int(round(self.t_end / self.h))


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    input_rates: Optional[np.ndarray] = None
    input_rates_left: Optional[np.ndarray] = None
    channels: dict = field(default_factory=dict)
    state_labels: tuple = ()
    input_labels: tuple = ()
    metric: Optional[np.ndarray] = None
    stride: int = 1
    rate_prefix: str = "ud"

    def __len__(self):
        return len(self.times)

    @property
    def rates_held(self):
        return self.input_rates_left is not None

    def columns(self):
        cols = [("t", self.times)]
        cols += [(f"x_{lab}", self.states[:, i]) for i, lab in enumerate(self.state_labels)]
        cols += [(f"u_{lab}", self.inputs[:, i]) for i, lab in enumerate(self.input_labels)]
        if self.input_rates is not None:
            labels = self.input_labels if self.input_rates.shape[1] == len(self.input_labels) else \
                [str(i + 1) for i in range(self.input_rates.shape[1])]
            cols += [(f"{self.rate_prefix}_{lab}", self.input_rates[:, i]) for i, lab in enumerate(labels)]
        for name, val in self.channels.items():
            val = np.asarray(val)
            if val.ndim == 1:
                cols.append((name, val))
            else:
                cols += [(f"{name}_{i + 1}", val[:, i]) for i in range(val.shape[1])]
        return cols

    def to_csv(self, path):
        cols = self.columns()
        data = np.column_stack([c[1] for c in cols])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([c[0] for c in cols])
            for row in data:
                writer.writerow([format(v, ".17g") for v in row])


def read_csv(path):
    """Column name -> array, as written by ``Trajectory.to_csv``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(header)}


# -- integration -------------------------------------------------------------

def _guard(t, z, domain):
    if not np.all(np.isfinite(z)):
        raise NonFiniteError(f"non-finite state at t={t:.6g}", time=t, state=z)
    if np.max(np.abs(z)) > DIVERGENCE_BOUND:
        raise DivergenceError(f"state magnitude exceeded {DIVERGENCE_BOUND:g} at t={t:.6g}", time=t, state=z)
    if domain is not None and not domain(z):
        raise DomainExitError(f"state left the model domain at t={t:.6g}: {z}", time=t, state=z)


def rk4(rhs, z0, h, n_steps, hold=None, record_every=1, domain=None, stop=None):
    """Classical fixed-step RK4 of ``zdot = rhs(t, z, w)``.

    ``hold(t)`` is sampled once at the start of each step and held over it
    (``w`` is ``None`` without it). Returns ``(times, Z, W, W_left)`` at the
    recorded steps, where ``W`` is the held value on the step starting at the
    sample and ``W_left`` the one on the step ending there. ``stop(t, z)``
    ends the run early after the current step.
    """
    z = np.array(z0, dtype=float)
    _guard(0.0, z, domain)
    eps = 1e-6 * h
    w_prev = w = hold(eps) if hold is not None else None
    ts, zs, ws, wls = [0.0], [z.copy()], [w], [w]
    for k in range(n_steps):
        t = k * h
        w = hold(t + eps) if hold is not None else None
        try:
            k1 = rhs(t, z, w)
            k2 = rhs(t + 0.5 * h, z + 0.5 * h * k1, w)
            k3 = rhs(t + 0.5 * h, z + 0.5 * h * k2, w)
            k4 = rhs(t + h, z + h * k3, w)
        except DomainError as exc:
            raise DomainExitError(f"evaluation left the model domain during step at t={t:.6g}: {exc}",
                                  time=t, state=z) from exc
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_next = (k + 1) * h
        _guard(t_next, z, domain)
        w_prev = w
        done = stop is not None and stop(t_next, z)
        if (k + 1) % record_every == 0 or done or k + 1 == n_steps:
            w_next = hold(t_next + eps) if hold is not None else None
            ts.append(t_next)
            zs.append(z.copy())
            ws.append(w_next)
            wls.append(w_prev)
        if done:
            break
    W = np.array(ws, dtype=float) if hold is not None else None
    WL = np.array(wls, dtype=float) if hold is not None else None
    return np.array(ts), np.array(zs), W, WL


@functools.singledispatch
def integrate(system, cfg: SimConfig, metric=None, stop=None):
    """Integrate ``system`` under ``cfg`` and return a ``Trajectory``.

    Plain input-affine systems take ``u`` from ``cfg.signal``; extended
    systems take ``u_d`` from it. Closed loops and interconnections register
    their own handlers in ``control``.
    """
    raise TypeError(f"cannot integrate objects of type {type(system).__name__}")


@integrate.register
def _(system: InputAffineSystem, cfg: SimConfig, metric=None, stop=None):
    sig = cfg.signal if cfg.signal is not None else zero(system.m)
    times, Z, W, _ = rk4(lambda t, z, w: system.f(z, w), cfg.x0, cfg.h, cfg.n_steps, hold=sig,
                         record_every=cfg.record_every, domain=system.domain, stop=stop)
    traj = Trajectory(times=times, states=Z, inputs=W, state_labels=system.state_labels,
                      input_labels=system.input_labels, stride=cfg.record_every)
    if metric is not None:
        Q = as_metric(metric).Q
        traj.metric = Q
        traj.channels["S_K"] = storage_series(system, Q, Z, W)
    return traj


@integrate.register
def _(system: ExtendedSystem, cfg: SimConfig, metric=None, stop=None):
    base, n = system.base, system.base.n
    if cfg.x0.shape != (system.n,):
        raise ValueError(f"extended initial state must have {system.n} entries (x, u)")
    sig = cfg.signal if cfg.signal is not None else zero(system.m)

    def rhs(t, z, w):
        return np.concatenate([base.f(z[:n], z[n:]), w])

    domain = None if base.domain is None else (lambda z: base.domain(z[:n]))
    times, Z, W, WL = rk4(rhs, cfg.x0, cfg.h, cfg.n_steps, hold=sig, record_every=cfg.record_every,
                          domain=domain, stop=stop)
    traj = Trajectory(times=times, states=Z[:, :n], inputs=Z[:, n:], input_rates=W, input_rates_left=WL,
                      state_labels=base.state_labels, input_labels=base.input_labels, stride=cfg.record_every)
    if metric is not None:
        attach_krasovskii_channels(traj, base, metric)
    return traj


def attach_krasovskii_channels(traj, sys, metric):
    Q = as_metric(metric).Q
    traj.metric = Q
    traj.channels["S_K"] = storage_series(sys, Q, traj.states, traj.inputs)
    traj.channels["h_K"] = output_series(sys, Q, traj.states, traj.inputs)
    return traj


# -- checks ------------------------------------------------------------------

@dataclass
class DissipationReport:
    min_residual: float
    tolerance: float
    relative_tolerance: float
    violations: np.ndarray
    residual: np.ndarray = field(repr=False)

    @property
    def passed(self):
        return self.violations.size == 0

    def to_dict(self):
        return {
            "min_residual": self.min_residual,
            "tolerance": self.tolerance,
            "relative_tolerance": self.relative_tolerance,
            "violations": int(self.violations.size),
            "first_violations": self.violations[:10].tolist(),
            "pass": self.passed,
        }


def judge_residual(residual, storage_scale, tol=DISSIPATION_TOL):
    """Pass/fail of a residual series against ``-tol * max|S|``, endpoints excluded."""
    abs_tol = tol * float(storage_scale)
    inner = residual[1:-1]
    bad = np.flatnonzero(inner < -abs_tol) + 1
    return DissipationReport(min_residual=float(inner.min()) if inner.size else 0.0, tolerance=abs_tol,
                             relative_tolerance=tol, violations=bad, residual=residual)


def verify_dissipation(traj: Trajectory, sys, Q, tol=DISSIPATION_TOL) -> DissipationReport:
    """Check ``u_d^T h_K - dS_K/dt >= -tol * max S_K`` at interior samples."""
    from .passivity import dissipation_residual

    if traj.input_rates is None:
        raise MissingChannelError("trajectory has no input-rate (u_d) record")
    if traj.rates_held and traj.stride > 1:
        raise ValueError("held input rates must be recorded at every step to difference the storage")
    r = dissipation_residual(traj, sys, Q)
    S = storage_series(sys, Q, traj.states, traj.inputs)
    return judge_residual(r, np.max(np.abs(S)), tol)


def convergence_metrics(traj: Trajectory, target, band: float):
    """``(settling_time, final_error)`` of ``(x, u)`` against ``target = (x*, u*)``.

    The settling time is the first sample time after which the error stays
    within ``band`` up to the horizon (``inf`` if the last sample is outside).
    """
    x_star, u_star = target
    z_star = np.concatenate([np.atleast_1d(x_star), np.atleast_1d(u_star)]).astype(float)
    Z = np.hstack([traj.states, traj.inputs])
    if Z.shape[1] != z_star.size:
        raise ValueError(f"target has {z_star.size} entries, trajectory rows have {Z.shape[1]}")
    err = np.linalg.norm(Z - z_star, axis=1)
    outside = np.flatnonzero(~(err <= band))
    if outside.size == 0:
        settling = float(traj.times[0])
    elif outside[-1] == len(err) - 1:
        settling = float("inf")
    else:
        settling = float(traj.times[outside[-1] + 1])
    return settling, float(err[-1])
