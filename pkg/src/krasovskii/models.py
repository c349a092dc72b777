"""Worked circuit models in ODE, port-Hamiltonian and gradient form.

Default parameter values are desk-scale choices (the source material gives
none): L = 10 mH, C = 1 mF, R = 0.5 Ohm, G = 0.04 S, Vs = 12 V, and for the
ZIP load P_bar = 0.1 W, I_s = 0.1 A.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as _k
from .dynamics import Equilibrium, InputAffineSystem, eval_vector_field
from .errors import DomainError, InfeasibleSetpointError, RegimeError
from .linalg import is_symmetric, min_eig

RLC_V_MIN = _k.RLC_V_MIN


@dataclass(frozen=True)
class BoostParams:
    L: float = 0.01
    C: float = 0.001
    R: float = 0.5
    G: float = 0.04
    Vs: float = 12.0

    def __post_init__(self):
        for name in ("L", "C", "R", "G", "Vs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"BoostParams.{name} must be strictly positive")

    def as_array(self):
        return np.array([self.L, self.C, self.R, self.G, self.Vs])


@dataclass(frozen=True)
class RlcZipParams:
    L: float = 0.01
    C: float = 0.001
    R: float = 0.5
    G: float = 0.04
    P_bar: float = 0.1
    I_s: float = 0.1

    def __post_init__(self):
        for name in ("L", "C", "R", "G", "P_bar", "I_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"RlcZipParams.{name} must be strictly positive")

    def as_array(self):
        return np.array([self.L, self.C, self.R, self.G, self.P_bar, self.I_s])


@dataclass(frozen=True, eq=False)
class PortHamiltonianForm:
    """``xdot = (J0 + sum_i J_i u_i - R) dH/dx + G u_s`` with constant matrices.

    ``J`` is the (m, n, n) stack of input-modulated interconnection matrices.
    """

    J0: np.ndarray
    J: np.ndarray
    R: np.ndarray
    G: np.ndarray
    u_s: np.ndarray
    hamiltonian: Callable
    grad_h: Callable
    hess_h: Callable
    name: str = "phs"
    hessian_constant: Optional[bool] = None

    def __post_init__(self):
        J0 = np.asarray(self.J0, dtype=float)
        n = J0.shape[0]
        J = np.asarray(self.J, dtype=float).reshape(-1, n, n)
        R = np.asarray(self.R, dtype=float)
        G = np.asarray(self.G, dtype=float).reshape(n, -1)
        u_s = np.asarray(self.u_s, dtype=float).reshape(-1)
        for mat in (J0, *J):
            if np.max(np.abs(mat + mat.T), initial=0.0) > 1e-12:
                raise ValueError(f"{self.name}: interconnection matrices must be skew-symmetric")
        if not is_symmetric(R) or min_eig(R) < -1e-10:
            raise ValueError(f"{self.name}: dissipation matrix must be symmetric PSD")
        if G.shape[1] != u_s.size:
            raise ValueError(f"{self.name}: G has {G.shape[1]} columns but u_s has {u_s.size} entries")
        rng = np.random.default_rng(0)
        for probe in rng.standard_normal((10, n)):
            if self.hamiltonian(probe) < 0:
                raise ValueError(f"{self.name}: Hamiltonian is negative at {probe}")
        for key, val in (("J0", J0), ("J", J), ("R", R), ("G", G), ("u_s", u_s)):
            object.__setattr__(self, key, val)

    @property
    def n(self):
        return self.J0.shape[0]

    @property
    def m(self):
        return self.J.shape[0]

    def drift(self, x):
        return (self.J0 - self.R) @ self.grad_h(x) + self.G @ self.u_s

    def input_columns(self, x):
        """The n x m matrix whose columns are ``J_i dH/dx``."""
        gh = self.grad_h(x)
        return np.stack([Ji @ gh for Ji in self.J], axis=1) if self.m else np.zeros((self.n, 0))

    def vector_field(self, x, u):
        u = np.asarray(u, dtype=float)
        jt = self.J0 + np.tensordot(u, self.J, axes=1) if self.m else self.J0
        return (jt - self.R) @ self.grad_h(x) + self.G @ self.u_s

    def as_system(self) -> InputAffineSystem:
        def jac_drift(x):
            return (self.J0 - self.R) @ self.hess_h(x)

        def jac_inputs(x):
            hs = self.hess_h(x)
            return np.stack([Ji @ hs for Ji in self.J]) if self.m else np.zeros((0, self.n, self.n))

        return InputAffineSystem(n=self.n, m=self.m, drift=self.drift, input_maps=self.input_columns,
                                 jac_drift=jac_drift, jac_inputs=jac_inputs, name=self.name)


@dataclass(frozen=True, eq=False)
class GradientForm:
    """``D xdot = dP/dx + B u`` with a nonsingular symmetric pseudo-metric ``D``."""

    D: np.ndarray
    potential: Callable
    grad_p: Callable
    hess_p: Callable
    B: np.ndarray
    name: str = "gradient"

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        if not is_symmetric(D):
            raise ValueError(f"{self.name}: D must be symmetric")
        if abs(np.linalg.det(D)) <= 1e-12:
            raise ValueError(f"{self.name}: D must be nonsingular")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "B", np.asarray(self.B, dtype=float).reshape(D.shape[0], -1))

    @property
    def n(self):
        return self.D.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def f_tilde(self, x, u):
        return self.grad_p(x) + self.B @ np.asarray(u, dtype=float)

    def vector_field(self, x, u):
        return np.linalg.solve(self.D, self.f_tilde(x, u))

    def supply_output(self, M, x, u):
        """``B^T M f_tilde(x, u)``, the output paired with ``u_d``."""
        return self.B.T @ np.asarray(M, dtype=float) @ self.f_tilde(x, u)


def _compiled_maps(model, p, n, m):
    p = np.ascontiguousarray(p, dtype=float)

    def drift(x):
        out = np.empty(n)
        _k.drift_into(model, p, n, m, np.ascontiguousarray(x, dtype=float), out)
        return out

    def input_maps(x):
        out = np.empty((n, m))
        _k.inputs_into(model, p, n, m, np.ascontiguousarray(x, dtype=float), out)
        return out

    return drift, input_maps


def boost_converter(p: BoostParams = BoostParams()):
    """Averaged boost converter, state (I, V), input duty ratio u.

    ``L dI/dt = -R I - (1 - u) V + Vs`` and ``C dV/dt = (1 - u) I - G V``.
    Returns the input-affine system and its port-Hamiltonian form with
    ``H = (L I^2 + C V^2) / 2``.
    """
    L, C, R, G, Vs = p.L, p.C, p.R, p.G, p.Vs
    drift, input_maps = _compiled_maps(_k.BOOST, p.as_array(), 2, 1)
    jd = np.array([[-R / L, -1.0 / L], [1.0 / C, -G / C]])
    ji = np.array([[[0.0, 1.0 / L], [-1.0 / C, 0.0]]])
    sys = InputAffineSystem(
        n=2, m=1, drift=drift, input_maps=input_maps,
        jac_drift=lambda x: jd.copy(), jac_inputs=lambda x: ji.copy(),
        name="boost", state_labels=("I", "V"), input_labels=("u",),
        state_units=("A", "V"), input_units=("1",),
        kernel=(_k.BOOST, p.as_array()),
    )
    # The switch enters as (1 - u): J(u) = J0 + u J1 with J0 = -J1.
    w = 1.0 / (L * C)
    hess = np.diag([L, C])
    phs = PortHamiltonianForm(
        J0=np.array([[0.0, -w], [w, 0.0]]),
        J=np.array([[[0.0, w], [-w, 0.0]]]),
        R=np.diag([R / L**2, G / C**2]),
        G=np.array([[1.0 / L], [0.0]]),
        u_s=np.array([Vs]),
        hamiltonian=lambda x: 0.5 * (L * x[0] ** 2 + C * x[1] ** 2),
        grad_h=lambda x: hess @ np.asarray(x, dtype=float),
        hess_h=lambda x: hess.copy(),
        name="boost_ph",
        hessian_constant=True,
    )
    return sys, phs


def boost_equilibrium(p: BoostParams, V_star: float, sys: Optional[InputAffineSystem] = None) -> Equilibrium:
    """Forced equilibrium of the boost converter at output voltage ``V_star``.

    With ``a = 1 - u*`` the equilibrium equations reduce to
    ``V* a^2 - Vs a + R G V* = 0``; the larger root (smaller duty ratio) is
    returned and both roots are kept in ``metadata``.
    """
    if not V_star > 0:
        raise RegimeError("V_star must be positive")
    disc = p.Vs**2 - 4.0 * p.R * p.G * V_star**2
    if disc < -1e-12 * p.Vs**2:
        raise InfeasibleSetpointError(f"V*={V_star} is not reachable: discriminant {disc:.6g} < 0")
    root = math.sqrt(max(disc, 0.0))
    a_hi = (p.Vs + root) / (2.0 * V_star)
    a_lo = (p.Vs - root) / (2.0 * V_star)
    u_star = 1.0 - a_hi
    if not 0.0 <= u_star <= 1.0:
        raise RegimeError(f"duty ratio u*={u_star:.6g} outside [0, 1]")
    x_star = np.array([p.G * V_star / a_hi, V_star])
    if sys is None:
        sys, _ = boost_converter(p)
    res = float(np.linalg.norm(eval_vector_field(sys, x_star, np.array([u_star]))))
    return Equilibrium(
        x_star=x_star, u_star=np.array([u_star]), residual_norm=res,
        metadata={"roots": (a_hi, a_lo), "duty_ratios": (1.0 - a_hi, 1.0 - a_lo), "discriminant": disc},
    )


def parallel_rlc_zip(p: RlcZipParams = RlcZipParams()):
    """Parallel RLC circuit feeding a ZIP load, state (I, V), input source voltage u.

    ``L dI/dt = -R I - V + u`` and ``C dV/dt = I - G V - P_bar / V - I_s``,
    defined for ``V >= 1e-9``. Returns the input-affine system and the
    gradient form with ``D = diag(-L, C)``, ``B = [[-1], [0]]`` and
    ``P = R I^2 / 2 + I V - G V^2 / 2 - P_bar ln V - I_s V``.
    """
    L, C, R, G, Pb, Is = p.L, p.C, p.R, p.G, p.P_bar, p.I_s
    raw_drift, input_maps = _compiled_maps(_k.RLC_ZIP, p.as_array(), 2, 1)

    def check(x):
        if not x[1] >= RLC_V_MIN:
            raise DomainError(f"RLC-ZIP model is undefined for V={x[1]:.3g} < {RLC_V_MIN}", point=np.array(x))

    def drift(x):
        check(x)
        return raw_drift(x)

    def jac_drift(x):
        check(x)
        return np.array([[-R / L, -1.0 / L], [1.0 / C, (-G + Pb / x[1] ** 2) / C]])

    sys = InputAffineSystem(
        n=2, m=1, drift=drift, input_maps=input_maps,
        jac_drift=jac_drift, jac_inputs=lambda x: np.zeros((1, 2, 2)),
        name="rlc_zip", state_labels=("I", "V"), input_labels=("u",),
        state_units=("A", "V"), input_units=("V",),
        domain=lambda x: bool(x[1] >= RLC_V_MIN),
        kernel=(_k.RLC_ZIP, p.as_array()),
    )

    def potential(x):
        check(x)
        I, V = x
        return 0.5 * R * I**2 + I * V - 0.5 * G * V**2 - Pb * math.log(V) - Is * V

    def grad_p(x):
        check(x)
        I, V = x
        return np.array([R * I + V, I - G * V - Pb / V - Is])

    def hess_p(x):
        check(x)
        return np.array([[R, 1.0], [1.0, -G + Pb / x[1] ** 2]])

    gsys = GradientForm(D=np.diag([-L, C]), potential=potential, grad_p=grad_p, hess_p=hess_p,
                        B=np.array([[-1.0], [0.0]]), name="rlc_zip_gradient")
    return sys, gsys


def rlc_zip_default_M(p: RlcZipParams):
    """Gradient-form weight for which ``D M D = diag(L, C)``."""
    return np.diag([1.0 / p.L, 1.0 / p.C])


def rlc_equilibrium_voltages(p: RlcZipParams, u: float):
    """Roots in V of the equilibrium quadratic at fixed source voltage ``u``.

    Eliminating ``I = (u - V) / R`` gives
    ``(1/R + G) V^2 - (u/R - I_s) V + P_bar = 0``; returned descending.
    """
    a = 1.0 / p.R + p.G
    b = -(u / p.R - p.I_s)
    c = p.P_bar
    disc = b * b - 4 * a * c
    if disc < 0:
        raise InfeasibleSetpointError(f"no equilibrium for u={u}")
    r = math.sqrt(disc)
    return ((-b + r) / (2 * a), (-b - r) / (2 * a))


def in_set_b(p: RlcZipParams, x) -> bool:
    """``G V^2 >= P_bar`` (boundary inclusive, with a relative rounding slack of 1e-12)."""
    V = float(np.asarray(x, dtype=float)[1])
    return p.G * V * V >= p.P_bar * (1.0 - 1e-12)


def set_b_boundary(p: RlcZipParams) -> float:
    return math.sqrt(p.P_bar / p.G)


def linear_system(A, B, name="linear") -> InputAffineSystem:
    """``xdot = A x + B u``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    drift, input_maps = _compiled_maps(_k.LINEAR, np.concatenate([A.ravel(), B.ravel()]), n, m)
    return InputAffineSystem(
        n=n, m=m, drift=drift, input_maps=input_maps,
        jac_drift=lambda x: A.copy(), jac_inputs=lambda x: np.zeros((m, n, n)),
        name=name, kernel=(_k.LINEAR, np.concatenate([A.ravel(), B.ravel()])),
    )


@dataclass(frozen=True)
class ModelBundle:
    """A named model with its representations and default metric."""

    name: str
    system: InputAffineSystem
    default_metric: Optional[np.ndarray] = None
    ph: Optional[PortHamiltonianForm] = None
    gradient: Optional[GradientForm] = None
    params: object = None
    extras: dict = field(default_factory=dict)

