"""Input-affine systems, their extensions with an input integrator, and equilibria."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, DimensionError, DomainError, SolverError

Array = np.ndarray

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100
NEWTON_MAX_HALVINGS = 30


@dataclass(frozen=True, eq=False)
class InputAffineSystem:
    """``xdot = drift(x) + input_maps(x) @ u`` with ``x`` in R^n and ``u`` in R^m.

    ``jac_drift(x)`` returns the n x n Jacobian of the drift and
    ``jac_inputs(x)`` an (m, n, n) stack with the Jacobian of every input
    column; both are optional and fall back to central differences.
    ``domain`` is an optional membership predicate on states, used as a guard
    by the integrator. ``kernel`` names a compiled model (see ``_kernels``).
    """

    n: int
    m: int
    drift: Callable[[Array], Array]
    input_maps: Callable[[Array], Array]
    jac_drift: Optional[Callable[[Array], Array]] = None
    jac_inputs: Optional[Callable[[Array], Array]] = None
    name: str = "system"
    state_labels: tuple = ()
    input_labels: tuple = ()
    state_units: tuple = ()
    input_units: tuple = ()
    domain: Optional[Callable[[Array], bool]] = None
    kernel: Optional[tuple] = None

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise DimensionError(f"invalid dimensions n={self.n}, m={self.m}")
        if not self.state_labels:
            object.__setattr__(self, "state_labels", tuple(f"x{i + 1}" for i in range(self.n)))
        if not self.input_labels:
            object.__setattr__(self, "input_labels", tuple(f"u{i + 1}" for i in range(self.m)))
        if len(self.state_labels) != self.n or len(self.input_labels) != self.m:
            raise DimensionError("label count does not match the system dimensions")

    def f(self, x, u):
        """Vector field without argument checks (hot path)."""
        return self.drift(x) + self.input_maps(x) @ u


@dataclass(frozen=True, eq=False)
class ExtendedSystem:
    """The base system augmented with ``udot = u_d``; state ``z = (x, u)``."""

    base: InputAffineSystem

    @property
    def n(self):
        return self.base.n + self.base.m

    @property
    def m(self):
        return self.base.m

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[: self.base.n], z[self.base.n:]

    def vector_field(self, z, u_d):
        x, u = self.split(z)
        u_d = np.asarray(u_d, dtype=float)
        if u_d.shape != (self.m,):
            raise DimensionError(f"u_d must have shape ({self.m},), got {u_d.shape}")
        return np.concatenate([eval_vector_field(self.base, x, u), u_d])

    def as_input_affine(self) -> InputAffineSystem:
        """The extension written as an input-affine system driven by ``u_d``."""
        base, n, m = self.base, self.base.n, self.base.m

        def drift(z):
            return np.concatenate([base.f(z[:n], z[n:]), np.zeros(m)])

        def input_maps(z):
            return np.vstack([np.zeros((n, m)), np.eye(m)])

        return InputAffineSystem(
            n=n + m,
            m=m,
            drift=drift,
            input_maps=input_maps,
            name=f"{base.name}_extended",
            state_labels=base.state_labels + base.input_labels,
            input_labels=tuple(f"d{lab}" for lab in base.input_labels),
        )


@dataclass(frozen=True)
class Equilibrium:
    x_star: Array
    u_star: Array
    residual_norm: float
    iterations: int = 0
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Jacobians:
    drift: Array
    inputs: Array  # shape (m, n, n)
    finite_difference: bool


def _check_state(sys, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise DimensionError(f"{sys.name}: state must have shape ({sys.n},), got {x.shape}")
    return x


def _check_input(sys, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (sys.m,):
        raise DimensionError(f"{sys.name}: input must have shape ({sys.m},), got {u.shape}")
    return u


def eval_vector_field(sys: InputAffineSystem, x, u) -> Array:
    """Return ``g0(x) + sum_i g_i(x) u_i``."""
    x = _check_state(sys, x)
    u = _check_input(sys, u)
    g = np.asarray(sys.input_maps(x), dtype=float)
    if g.shape != (sys.n, sys.m):
        raise DimensionError(f"{sys.name}: input map returned shape {g.shape}, expected ({sys.n}, {sys.m})")
    return np.asarray(sys.drift(x), dtype=float) + g @ u


def fd_step(x):
    return 1e-6 * max(1.0, float(np.linalg.norm(x)))


def _central_difference(fun, x, h):
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        try:
            fp = np.asarray(fun(x + e), dtype=float)
            fm = np.asarray(fun(x - e), dtype=float)
        except Exception as exc:  # noqa: BLE001 - any evaluator failure is a domain problem here
            raise DomainError(f"evaluation failed near {x} (coordinate {j}): {exc}", point=x.copy()) from exc
        cols.append((fp - fm) / (2.0 * h))
    return np.stack(cols, axis=-1)


def eval_jacobians(sys: InputAffineSystem, x, force_fd: bool = False) -> Jacobians:
    """Jacobians of the drift and of every input column at ``x``.

    Missing analytic Jacobians (or ``force_fd``) use central differences with
    step ``1e-6 * max(1, |x|)``; the result records which route was taken.
    """
    x = _check_state(sys, x)
    used_fd = False
    if sys.jac_drift is not None and not force_fd:
        jd = np.asarray(sys.jac_drift(x), dtype=float)
    else:
        jd = _central_difference(sys.drift, x, fd_step(x))
        used_fd = True
    if sys.jac_inputs is not None and not force_fd:
        ji = np.asarray(sys.jac_inputs(x), dtype=float).reshape(sys.m, sys.n, sys.n)
    else:
        # stack of d(column i)/dx, from the (n, m, n) difference quotient
        dg = _central_difference(sys.input_maps, x, fd_step(x))
        ji = np.transpose(dg, (1, 0, 2)) if sys.m else np.zeros((0, sys.n, sys.n))
        used_fd = True
    return Jacobians(drift=jd, inputs=ji, finite_difference=used_fd)


def jacobian_x(sys, x, u):
    """Jacobian of ``f(x, u)`` with respect to ``x``."""
    jac = eval_jacobians(sys, x)
    return jac.drift + np.tensordot(u, jac.inputs, axes=1) if sys.m else jac.drift


def extend(sys: InputAffineSystem) -> ExtendedSystem:
    return ExtendedSystem(base=sys)


def find_equilibrium(sys: InputAffineSystem, guess, frozen=None, tol: float = NEWTON_TOL,
                     max_iter: int = NEWTON_MAX_ITER) -> Equilibrium:
    """Damped Newton iteration on ``f(x, u) = 0``.

    ``guess`` is a pair ``(x0, u0)``; ``frozen`` is a boolean mask over the
    n + m coordinates of ``(x, u)`` that stay at their guessed values. Exactly
    n coordinates must be free. Each Newton step is halved (at most 30 times)
    until the residual norm decreases.
    """
    x0, u0 = guess
    z = np.concatenate([_check_state(sys, x0), _check_input(sys, u0)])
    if not np.all(np.isfinite(z)):
        raise ValueError("equilibrium guess must be finite")
    n, m = sys.n, sys.m
    frozen = np.zeros(n + m, dtype=bool) if frozen is None else np.asarray(frozen, dtype=bool)
    if frozen.shape != (n + m,):
        raise DimensionError(f"frozen mask must have length {n + m}")
    free = np.flatnonzero(~frozen)
    if free.size != n:
        raise DimensionError(f"need exactly {n} free coordinates for a square Newton system, got {free.size}")

    def residual(zz):
        return eval_vector_field(sys, zz[:n], zz[n:])

    r = residual(z)
    rn = float(np.linalg.norm(r))
    for it in range(max_iter + 1):
        if rn <= tol:
            return Equilibrium(x_star=z[:n].copy(), u_star=z[n:].copy(), residual_norm=rn, iterations=it)
        if it == max_iter:
            break
        x, u = z[:n], z[n:]
        jac = np.hstack([jacobian_x(sys, x, u), np.asarray(sys.input_maps(x), dtype=float)])[:, free]
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > 1e14:
            raise SolverError(f"singular Newton Jacobian at iterate {it}: z={z}")
        step = np.linalg.solve(jac, -r)
        alpha = 1.0
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            trial = z.copy()
            trial[free] += alpha * step
            try:
                r_trial = residual(trial)
            except DomainError:
                r_trial = None
            if r_trial is not None and np.linalg.norm(r_trial) < rn:
                break
            alpha *= 0.5
        else:
            raise ConvergenceError(f"line search stalled at iterate {it} with residual {rn:.3e}")
        z, r = trial, r_trial
        rn = float(np.linalg.norm(r))
    raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {rn:.3e})")
