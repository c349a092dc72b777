"""Compiled vector fields for the shipped models and a closed-loop RK4 runner.

The closed loop of the boost converter is stiff (the feedback gain on the
input is ``|g(x)|_Q^2``, roughly 6e4 at the default operating point) while
its slowest mode decays on a time scale of minutes, so a fixed-step RK4 run
takes ~1e7 steps. Those loops run here, allocation free.

Parameter vectors:
    BOOST   [L, C, R, G, Vs]
    RLC_ZIP [L, C, R, G, P_bar, I_s]
    LINEAR  [A.ravel(), B.ravel()]
"""
import functools

import numpy as np
from numba import njit

BOOST = 0
RLC_ZIP = 1
LINEAR = 2

OK = 0
DIVERGED = 1
LEFT_DOMAIN = 2
NON_FINITE = 3

RLC_V_MIN = 1e-9
DIVERGENCE_BOUND = 1e9


@njit(cache=True, inline="always", error_model="numpy")
def drift_into(model, p, n, m, x, out):
    # reads x[:n] only, so callers may pass the full (x, u) vector
    if model == BOOST:
        L, C, R, G, Vs = p[0], p[1], p[2], p[3], p[4]
        out[0] = (-R * x[0] - x[1] + Vs) / L
        out[1] = (x[0] - G * x[1]) / C
    elif model == RLC_ZIP:
        L, C, R, G, Pb, Is = p[0], p[1], p[2], p[3], p[4], p[5]
        out[0] = (-R * x[0] - x[1]) / L
        out[1] = (x[0] - G * x[1] - Pb / x[1] - Is) / C
    else:
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += p[i * n + j] * x[j]
            out[i] = s


@njit(cache=True, inline="always", error_model="numpy")
def inputs_into(model, p, n, m, x, out):
    if model == BOOST:
        L, C = p[0], p[1]
        out[0, 0] = x[1] / L
        out[1, 0] = -x[0] / C
    elif model == RLC_ZIP:
        out[0, 0] = 1.0 / p[0]
        out[1, 0] = 0.0
    else:
        off = n * n
        for i in range(n):
            for j in range(m):
                out[i, j] = p[off + i * m + j]


@njit(inline="always", error_model="numpy")
def _rhs(model, n, m, p, Q, K1inv, K2, u_star, nu, gain_sign, z, out, f, g, qf, hk, tmp):
    drift_into(model, p, n, m, z, f)
    inputs_into(model, p, n, m, z, g)
    for i in range(n):
        s = f[i]
        for j in range(m):
            s += g[i, j] * z[n + j]
        f[i] = s
        out[i] = s
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += Q[i, j] * f[j]
        qf[i] = s
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += g[i, j] * qf[i]
        hk[j] = s
    # u_d = K1^{-1} (gain_sign * K2 (u* - u) - h_K + nu)
    for i in range(m):
        s = 0.0
        for j in range(m):
            s += K2[i, j] * (u_star[j] - z[n + j])
        tmp[i] = gain_sign * s - hk[i] + nu[i]
    for i in range(m):
        s = 0.0
        for j in range(m):
            s += K1inv[i, j] * tmp[j]
        out[n + i] = s


# Model id and dimensions are baked in as closure constants so the compiler
# can unroll the tiny loops; the numpy error model drops the zero-division
# checks on runtime parameters. Together they are worth ~15x here.
def _make_runner(model, n, m):
    @njit(cache=True, error_model="numpy")
    def run(p, Q, K1inv, K2, u_star, nu, gain_sign, z0, h, n_steps, every):
        d = n + m
        n_rec = n_steps // every + 1
        rec = np.empty((n_rec + 1, d))
        z = z0.copy()
        rec[0, :] = z
        k1 = np.empty(d)
        k2 = np.empty(d)
        k3 = np.empty(d)
        k4 = np.empty(d)
        zt = np.empty(d)
        f = np.empty(n)
        g = np.empty((n, m))
        qf = np.empty(n)
        hk = np.empty(m)
        tmp = np.empty(m)
        j = 1
        for k in range(n_steps):
            _rhs(model, n, m, p, Q, K1inv, K2, u_star, nu, gain_sign, z, k1, f, g, qf, hk, tmp)
            for i in range(d):
                zt[i] = z[i] + 0.5 * h * k1[i]
            _rhs(model, n, m, p, Q, K1inv, K2, u_star, nu, gain_sign, zt, k2, f, g, qf, hk, tmp)
            for i in range(d):
                zt[i] = z[i] + 0.5 * h * k2[i]
            _rhs(model, n, m, p, Q, K1inv, K2, u_star, nu, gain_sign, zt, k3, f, g, qf, hk, tmp)
            for i in range(d):
                zt[i] = z[i] + h * k3[i]
            _rhs(model, n, m, p, Q, K1inv, K2, u_star, nu, gain_sign, zt, k4, f, g, qf, hk, tmp)
            status = OK
            for i in range(d):
                z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not np.isfinite(z[i]):
                    status = NON_FINITE
                elif abs(z[i]) > DIVERGENCE_BOUND:
                    status = DIVERGED
            if status == OK and model == RLC_ZIP and z[1] < RLC_V_MIN:
                status = LEFT_DOMAIN
            if status != OK:
                rec[j, :] = z
                return rec, j + 1, status, k + 1
            if (k + 1) % every == 0:
                rec[j, :] = z
                j += 1
        return rec, j, OK, n_steps

    return run


@functools.lru_cache(maxsize=None)
def _runner(model, n, m):
    return _make_runner(model, n, m)


def run_closed_loop(model, p, n, m, Q, K1inv, K2, u_star, nu, gain_sign, z0, h, n_steps, every):
    """Fixed-step RK4 of the closed loop; records every ``every`` steps.

    Returns (records, n_recorded, status, failing_step).
    """
    return _runner(int(model), int(n), int(m))(p, Q, K1inv, K2, u_star, nu, float(gain_sign), z0, float(h),
                                               int(n_steps), int(every))
