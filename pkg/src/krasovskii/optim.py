"""Primal-dual gradient flow for equality-constrained convex programs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import InputAffineSystem
from .errors import DimensionError, RankError
from .linalg import is_symmetric, min_eig
from .passivity import StorageMetric

KKT_TOL = 1e-8
KKT_PATIENCE = 10


@dataclass(frozen=True, eq=False)
class ConvexProgram:
    """``min F(x)`` subject to ``A x = b``; ``tau_x``, ``tau_lam`` are the flow's time constants.

    ``quadratic`` holds ``(P, q)`` when ``F(x) = x^T P x / 2 + q^T x``.
    """

    F: Callable
    grad: Callable
    hess: Callable
    A: np.ndarray
    b: np.ndarray
    tau_x: np.ndarray
    tau_lam: np.ndarray
    quadratic: Optional[tuple] = None
    probe_seed: int = 0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        n = A.shape[1] if A.ndim == 2 else np.asarray(self.tau_x).shape[0]
        A = A.reshape(-1, n)
        m = A.shape[0]
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if b.shape != (m,):
            raise DimensionError(f"b must have {m} entries, got {b.size}")
        tau_x = np.atleast_2d(np.asarray(self.tau_x, dtype=float))
        tau_lam = np.asarray(self.tau_lam, dtype=float).reshape(m, m)
        for name, tau in (("tau_x", tau_x), ("tau_lam", tau_lam)):
            if tau.size and (not is_symmetric(tau) or min_eig(tau) <= 0):
                raise RankError(f"{name} must be symmetric positive definite")
        if tau_x.shape != (n, n):
            raise DimensionError(f"tau_x must be {n}x{n}")
        if m and np.linalg.matrix_rank(A) < m:
            raise RankError(f"constraint matrix has rank {np.linalg.matrix_rank(A)} < {m} rows")
        rng = np.random.default_rng(self.probe_seed)
        for probe in rng.standard_normal((5, n)):
            if min_eig(np.asarray(self.hess(probe), dtype=float)) < 1e-9:
                raise ValueError("objective Hessian is not positive definite at a probe point")
        for key, val in (("A", A), ("b", b), ("tau_x", tau_x), ("tau_lam", tau_lam)):
            object.__setattr__(self, key, val)

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]


def quadratic_program(P, q, A=None, b=None, tau_x=None, tau_lam=None) -> ConvexProgram:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = P.shape[0]
    q = np.asarray(q, dtype=float).reshape(n)
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float).reshape(-1)
    m = A.shape[0]
    tau_x = np.eye(n) if tau_x is None else tau_x
    tau_lam = np.eye(m) if tau_lam is None else tau_lam
    if not is_symmetric(P):
        raise ValueError("P must be symmetric")
    return ConvexProgram(F=lambda x: 0.5 * x @ P @ x + q @ x, grad=lambda x: P @ x + q, hess=lambda x: P,
                         A=A, b=b, tau_x=tau_x, tau_lam=tau_lam, quadratic=(P, q))


@dataclass(frozen=True)
class KktPoint:
    x_star: np.ndarray
    lambda_star: np.ndarray
    stationarity_norm: float
    feasibility_norm: float


def _split(prog, x, lam):
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if x.shape != (prog.n,) or lam.shape != (prog.m,):
        raise DimensionError(f"expected x in R^{prog.n} and lambda in R^{prog.m}")
    return x, lam


def lagrangian(prog: ConvexProgram, x, lam) -> float:
    x, lam = _split(prog, x, lam)
    return float(prog.F(x) + lam @ (prog.A @ x - prog.b))


def kkt_residual(prog: ConvexProgram, x, lam):
    """``(|grad F(x) + A^T lambda|, |A x - b|)``."""
    x, lam = _split(prog, x, lam)
    return (float(np.linalg.norm(prog.grad(x) + prog.A.T @ lam)),
            float(np.linalg.norm(prog.A @ x - prog.b)))


def build_primal_dual(prog: ConvexProgram):
    """Primal-dual flow as an input-affine system over ``(x, lambda)``.

    ``tau_x xdot = -(grad F + A^T lambda + u)`` and
    ``tau_lam lambdadot = A x - b``; the input ``u`` enters the primal
    equation only. The returned metric is ``diag(tau_x, tau_lam)``.
    """
    n, m = prog.n, prog.m
    tx_inv = np.linalg.inv(prog.tau_x)
    tl_inv = np.linalg.inv(prog.tau_lam) if m else np.zeros((0, 0))
    A, b = prog.A, prog.b
    g = np.vstack([-tx_inv, np.zeros((m, n))])

    def drift(z):
        x, lam = z[:n], z[n:]
        return np.concatenate([-tx_inv @ (prog.grad(x) + A.T @ lam), tl_inv @ (A @ x - b)])

    def jac_drift(z):
        x = z[:n]
        top = np.hstack([-tx_inv @ prog.hess(x), -tx_inv @ A.T])
        bottom = np.hstack([tl_inv @ A, np.zeros((m, m))])
        return np.vstack([top, bottom])

    sys = InputAffineSystem(
        n=n + m, m=n, drift=drift, input_maps=lambda z: g,
        jac_drift=jac_drift, jac_inputs=lambda z: np.zeros((n, n + m, n + m)),
        name="primal_dual",
        state_labels=tuple(f"x{i + 1}" for i in range(n)) + tuple(f"lambda{i + 1}" for i in range(m)),
        input_labels=tuple(f"v{i + 1}" for i in range(n)),
    )
    Q = np.zeros((n + m, n + m))
    Q[:n, :n] = prog.tau_x
    Q[n:, n:] = prog.tau_lam
    return sys, StorageMetric(Q)


def stated_supply_output(prog: ConvexProgram, x, lam, u):
    """``-tau_x^{-1} (dL/dx + u)``, the output as written for the primal-dual flow.

    This is the primal velocity. The output from the general construction,
    ``g^T Q f``, is its negative; ``supply_output`` returns that one.
    """
    x, lam = _split(prog, x, lam)
    return -np.linalg.solve(prog.tau_x, prog.grad(x) + prog.A.T @ lam + np.asarray(u, dtype=float))


def solve_kkt_direct(prog: ConvexProgram) -> KktPoint:
    """Direct solve of ``[[P, A^T], [A, 0]] (x, lambda) = (-q, b)`` for a quadratic objective."""
    if prog.quadratic is None:
        raise ValueError("direct KKT solve needs a quadratic objective")
    P, q = prog.quadratic
    n, m = prog.n, prog.m
    if m and np.linalg.matrix_rank(prog.A) < m:
        raise RankError("constraint matrix is rank deficient")
    K = np.block([[P, prog.A.T], [prog.A, np.zeros((m, m))]])
    if np.linalg.matrix_rank(K) < n + m:
        raise RankError("KKT matrix is singular")
    sol = np.linalg.solve(K, np.concatenate([-q, prog.b]))
    x, lam = sol[:n], sol[n:]
    s, f = kkt_residual(prog, x, lam)
    return KktPoint(x_star=x, lambda_star=lam, stationarity_norm=s, feasibility_norm=f)


def kkt_stop(prog: ConvexProgram, tol=KKT_TOL, patience=KKT_PATIENCE):
    """Stop predicate for the integrator: both residuals below ``tol`` for ``patience`` consecutive steps."""
    n = prog.n
    streak = [0]

    def stop(t, z):
        s, f = kkt_residual(prog, z[:n], z[n:])
        streak[0] = streak[0] + 1 if max(s, f) <= tol else 0
        return streak[0] >= patience

    return stop


def random_quadratic_program(rng, n, m, eig_range=(1.0, 3.0), sv_range=(1.0, 2.0)) -> ConvexProgram:
    """Random strictly convex QP with controlled Hessian spectrum and constraint singular values."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    P = U @ np.diag(rng.uniform(*eig_range, size=n)) @ U.T
    P = 0.5 * (P + P.T)
    q = rng.standard_normal(n)
    if m:
        Ua, _ = np.linalg.qr(rng.standard_normal((m, m)))
        Va, _ = np.linalg.qr(rng.standard_normal((n, m)))
        A = Ua @ np.diag(rng.uniform(*sv_range, size=m)) @ Va.T
        b = rng.standard_normal(m)
    else:
        A, b = np.zeros((0, n)), np.zeros(0)
    return quadratic_program(P, q, A, b)
