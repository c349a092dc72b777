"""Krasovskii storage and supply, sampled certificates, dissipation residuals.

The matrix inequalities below are pointwise in the state, so they are
certified by evaluating them on a deterministic sample of a region and
recording the worst margin seen. Nothing here is a proof over the region.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import InputAffineSystem, eval_jacobians, eval_vector_field
from .errors import DimensionError, DomainError, MetricError, MissingChannelError, NotApplicableError
from .linalg import is_symmetric, jacobi_eigh, max_eig

TOL_NEG = 1e-9
TOL_ZERO = 1e-9
DISSIPATION_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class StorageMetric:
    """Symmetric PSD weight ``Q`` of the storage ``(1/2) |f(x, u)|_Q^2``."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if not is_symmetric(Q, atol=1e-12):
            raise MetricError("storage metric must be symmetric to 1e-12")
        eig = jacobi_eigh(Q)
        if eig[0] < -1e-10:
            raise MetricError(f"storage metric is not PSD (min eigenvalue {eig[0]:.3e})")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "_eig", eig)

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def min_eigenvalue(self):
        return float(self._eig[0])

    @property
    def positive_definite(self):
        return bool(self._eig[0] > 1e-10)


def as_metric(Q) -> StorageMetric:
    return Q if isinstance(Q, StorageMetric) else StorageMetric(np.asarray(Q, dtype=float))


@dataclass(frozen=True, eq=False)
class RegionSampler:
    """Uniform samples of a box over ``(x, u)``, filtered by an optional predicate.

    ``lows``/``highs`` cover the n state coordinates followed by the m input
    coordinates. ``predicate(x, u)`` restricts the region (e.g. set B);
    rejection sampling draws until ``samples`` points are accepted.
    """

    lows: np.ndarray
    highs: np.ndarray
    n_state: int
    samples: int = 1000
    seed: int = 0
    predicate: Optional[Callable] = None
    max_attempts: int = 100

    def __post_init__(self):
        lo = np.asarray(self.lows, dtype=float).reshape(-1)
        hi = np.asarray(self.highs, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("sampler bounds must have equal length with lows <= highs")
        if not 0 < self.n_state <= lo.size:
            raise ValueError("n_state must be within the bound vector length")
        if self.samples < 1:
            raise ValueError("sampler needs at least one sample")
        object.__setattr__(self, "lows", lo)
        object.__setattr__(self, "highs", hi)

    def draw(self):
        """Return ``(X, U)`` with shapes (samples, n) and (samples, m)."""
        rng = np.random.default_rng(self.seed)
        kept = []
        need = self.samples
        for _ in range(self.max_attempts):
            batch = rng.uniform(self.lows, self.highs, size=(max(need, 16) * 2, self.lows.size))
            if self.predicate is not None:
                batch = batch[[bool(self.predicate(z[: self.n_state], z[self.n_state:])) for z in batch]]
            kept.append(batch[:need])
            need -= len(kept[-1])
            if need == 0:
                break
        else:
            raise ValueError("sampler predicate rejects almost all of the box")
        pts = np.vstack(kept)
        return pts[:, : self.n_state], pts[:, self.n_state:]


@dataclass
class PassivityCertificate:
    """Worst-case margins of a sampled sufficient condition."""

    condition: str
    worst_max_eig: float
    worst_zero_entry: float
    samples: int
    tol_neg: float = TOL_NEG
    tol_zero: float = TOL_ZERO
    worst_sample: Optional[np.ndarray] = None
    details: dict = field(default_factory=dict)

    @property
    def pass_neg(self):
        return bool(self.worst_max_eig <= self.tol_neg)

    @property
    def pass_zero(self):
        return bool(self.worst_zero_entry <= self.tol_zero)

    @property
    def passed(self):
        return self.pass_neg and self.pass_zero

    def to_dict(self):
        return {
            "condition": self.condition,
            "worst_margin": self.worst_max_eig,
            "samples": self.samples,
            "tolerance": self.tol_neg,
            "pass": self.passed,
            "checks": [
                {"name": "drift_term_nsd", "worst": self.worst_max_eig, "tolerance": self.tol_neg,
                 "pass": self.pass_neg},
                {"name": "input_terms_zero", "worst": self.worst_zero_entry, "tolerance": self.tol_zero,
                 "pass": self.pass_zero},
            ],
            "worst_sample": None if self.worst_sample is None else [float(v) for v in self.worst_sample],
            **self.details,
        }


def _check_metric(sys, Q):
    Q = as_metric(Q)
    if Q.n != sys.n:
        raise DimensionError(f"metric is {Q.n}x{Q.n} but {sys.name} has n={sys.n}")
    return Q.Q


def storage(sys: InputAffineSystem, Q, x, u) -> float:
    """``(1/2) f(x, u)^T Q f(x, u)``."""
    Qm = _check_metric(sys, Q)
    f = eval_vector_field(sys, x, u)
    return 0.5 * float(f @ Qm @ f)


def supply_output(sys: InputAffineSystem, Q, x, u) -> np.ndarray:
    """``g(x)^T Q f(x, u)``, the output paired with ``u_d`` in the supply rate."""
    Qm = _check_metric(sys, Q)
    f = eval_vector_field(sys, x, u)
    return np.asarray(sys.input_maps(np.asarray(x, dtype=float)), dtype=float).T @ (Qm @ f)


def symmetric_part(Q, A):
    """``Q A + A^T Q``."""
    QA = Q @ A
    return QA + QA.T


def prop1_terms(sys: InputAffineSystem, Q, x):
    """``(Q_g0(x), [Q_gi(x)])`` for the drift and input columns at ``x``."""
    Qm = _check_metric(sys, Q)
    jac = eval_jacobians(sys, x)
    return symmetric_part(Qm, jac.drift), [symmetric_part(Qm, Ji) for Ji in jac.inputs]


def prop1_margins(sys, Q, X):
    """Largest eigenvalue of ``Q_g0`` at each row of ``X``."""
    return np.array([max_eig(prop1_terms(sys, Q, x)[0]) for x in np.atleast_2d(X)])


def _certify(condition, points, evaluate, tol_neg, tol_zero, details=None):
    worst_eig = -np.inf
    worst_zero = 0.0
    worst_pt = None
    for pt in points:
        try:
            S0, Si = evaluate(pt)
        except DomainError as exc:
            raise DomainError(f"{condition}: evaluation failed at sample {pt}: {exc}", point=pt) from exc
        lam = max_eig(S0)
        if lam > worst_eig:
            worst_eig, worst_pt = lam, np.asarray(pt, dtype=float)
        for S in Si:
            worst_zero = max(worst_zero, float(np.max(np.abs(S), initial=0.0)))
    return PassivityCertificate(condition=condition, worst_max_eig=float(worst_eig), worst_zero_entry=worst_zero,
                                samples=len(points), tol_neg=tol_neg, tol_zero=tol_zero,
                                worst_sample=worst_pt, details=details or {})


def check_prop1(sys: InputAffineSystem, Q, sampler: RegionSampler, tol_neg=TOL_NEG, tol_zero=TOL_ZERO):
    """Sampled check of ``Q_g0(x) <= 0`` and ``Q_gi(x) = 0``.

    Passing certifies (on the samples) that the system is Krasovskii passive
    with output ``g(x)^T Q f(x, u)``.
    """
    _check_metric(sys, Q)
    X, U = sampler.draw()
    pts = np.hstack([X, U])
    return _certify("krasovskii_prop1", pts, lambda z: prop1_terms(sys, Q, z[: sys.n]), tol_neg, tol_zero,
                    {"metric": np.asarray(as_metric(Q).Q).tolist()})


def _ph_terms(phs, Qm, x):
    hs = phs.hess_h(x)
    S0 = Qm @ (phs.J0 - phs.R) @ hs + hs @ (-phs.J0 - phs.R) @ Qm
    Si = [Qm @ Ji @ hs - hs @ Ji @ Qm for Ji in phs.J]
    return S0, Si


def check_ph(phs, Q, sampler: Optional[RegionSampler] = None, tol_neg=TOL_NEG, tol_zero=TOL_ZERO):
    """Port-Hamiltonian form of the check.

    Verifies ``Q (J0 - R) H'' + H'' (-J0 - R) Q <= 0`` and
    ``Q J_i H'' - H'' J_i Q = 0``. A constant Hessian is checked once;
    otherwise ``sampler`` supplies the states.
    """
    Qm = as_metric(Q).Q
    if Qm.shape != (phs.n, phs.n):
        raise DimensionError(f"metric is {Qm.shape} but the pH system has n={phs.n}")
    constant = phs.hessian_constant
    if constant is None:
        constant = hessian_is_constant(phs.hess_h, phs.n)
    if constant:
        pts = np.zeros((1, phs.n))
    elif sampler is None:
        raise ValueError("state-dependent Hessian needs a sampler")
    else:
        pts = sampler.draw()[0]
    return _certify("port_hamiltonian", pts, lambda x: _ph_terms(phs, Qm, x), tol_neg, tol_zero,
                    {"metric": Qm.tolist(), "constant_hessian": bool(constant)})


def hessian_is_constant(hess, n, probes=10, seed=0, atol=1e-9):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((probes, n))
    ref = np.asarray(hess(pts[0]), dtype=float)
    return all(np.max(np.abs(np.asarray(hess(p), dtype=float) - ref)) <= atol for p in pts[1:])


def auto_metric_ph(phs, alpha: float = 1.0) -> StorageMetric:
    """``Q = alpha * H''`` for a Hamiltonian with constant, PSD Hessian."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not hessian_is_constant(phs.hess_h, phs.n):
        raise NotApplicableError(f"{phs.name}: Hessian of H is not constant")
    hs = np.asarray(phs.hess_h(np.zeros(phs.n)), dtype=float)
    try:
        return StorageMetric(alpha * hs)
    except MetricError as exc:
        raise NotApplicableError(f"{phs.name}: Hessian of H is not PSD") from exc


def gradient_metric(gsys, M) -> StorageMetric:
    """``Q = D M D``."""
    M = np.asarray(M, dtype=float)
    return StorageMetric(gsys.D @ M @ gsys.D)


def check_gradient(gsys, M, sampler: RegionSampler, tol_neg=TOL_NEG):
    """Gradient-form check ``D M P'' + P'' M D <= 0`` on the samples.

    Returns ``(certificate, metric)`` where the metric ``D M D`` is only
    returned (otherwise ``None``) when the certificate passes.
    """
    M = as_metric(M).Q
    if M.shape != (gsys.n, gsys.n):
        raise DimensionError(f"M is {M.shape} but the gradient system has n={gsys.n}")
    DM = gsys.D @ M

    def terms(z):
        hp = gsys.hess_p(z[: gsys.n])
        S = DM @ hp
        return S + S.T, []

    X, U = sampler.draw()
    cert = _certify("gradient_form", np.hstack([X, U]), terms, tol_neg, TOL_ZERO, {"M": M.tolist()})
    return cert, (gradient_metric(gsys, M) if cert.passed else None)


def _one_sided(times, S, k, step, smooth):
    """Derivative at ``k`` from samples on one side (``step`` = +1 or -1).

    Second order when the next sample along is not itself a jump, first order otherwise.
    """
    k1, k2 = k + step, k + 2 * step
    dt = times[k1] - times[k]
    if 0 <= k2 < len(S) and smooth[k1]:
        return (-3.0 * S[k] + 4.0 * S[k1] - S[k2]) / (2.0 * dt)
    return (S[k1] - S[k]) / dt


def residual_from_series(times, storage_series, rates, outputs, rates_left=None, outputs_left=None):
    """``w(t_k) - dS/dt(t_k)`` with ``w = rates . outputs``.

    ``dS/dt`` uses centered differences inside and second-order one-sided
    differences at the two endpoints. ``rates_left``/``outputs_left`` are the
    left limits for rates held over each step. Where they jump, dS/dt has a
    kink and a centered difference is only first-order accurate there, so each
    side is differenced one-sidedly against its own supply and the smaller
    residual is kept.
    """
    times = np.asarray(times, dtype=float)
    S = np.asarray(storage_series, dtype=float)
    N = len(times)
    if N < 3:
        raise ValueError("need at least three samples to difference the storage")
    rates = np.asarray(rates, dtype=float).reshape(N, -1)
    outputs = np.asarray(outputs, dtype=float).reshape(N, -1)
    r = np.einsum("ij,ij->i", rates, outputs) - np.gradient(S, times, edge_order=2)
    if rates_left is None:
        return r
    rl = np.asarray(rates_left, dtype=float).reshape(N, -1)
    ol = outputs if outputs_left is None else np.asarray(outputs_left, dtype=float).reshape(N, -1)
    jump = np.any(rl != rates, axis=1) | np.any(ol != outputs, axis=1)
    jump[[0, -1]] = False
    smooth = ~jump
    for k in np.flatnonzero(jump):
        right = rates[k] @ outputs[k] - _one_sided(times, S, k, 1, smooth)
        left = rl[k] @ ol[k] - _one_sided(times, S, k, -1, smooth)
        r[k] = min(right, left)
    return r


def storage_series(sys, Q, states, inputs):
    Qm = _check_metric(sys, Q)
    out = np.empty(len(states))
    for k, (x, u) in enumerate(zip(states, inputs)):
        f = sys.f(x, u)
        out[k] = 0.5 * float(f @ Qm @ f)
    return out


def output_series(sys, Q, states, inputs):
    Qm = _check_metric(sys, Q)
    out = np.empty((len(states), sys.m))
    for k, (x, u) in enumerate(zip(states, inputs)):
        out[k] = np.asarray(sys.input_maps(x)).T @ (Qm @ sys.f(x, u))
    return out


def dissipation_residual(traj, sys, Q):
    """``u_d^T h_K - dS_K/dt`` along a trajectory of the extended system.

    Storage and output are recomputed from the recorded states and inputs.
    Endpoints use one-sided differences and should be left out of pass/fail
    decisions (``verify_dissipation`` does).
    """
    if traj.input_rates is None:
        raise MissingChannelError("trajectory has no input-rate (u_d) record")
    S = storage_series(sys, Q, traj.states, traj.inputs)
    h = output_series(sys, Q, traj.states, traj.inputs)
    return residual_from_series(traj.times, S, traj.input_rates, h, traj.input_rates_left)
