"""Which sign of the proportional term stabilizes the boost loop.

The controller drives u_d = K1^{-1}(s K2 (u* - u) - h_K + nu). For s = +1
the storage S_d decreases; s = -1 is the other reading of the rate law.
Prints the largest real part of the closed-loop linearization for both signs
over a range of setpoints and gains.
"""
import numpy as np

from krasovskii import BoostParams, KrasovskiiController, boost_converter, boost_equilibrium, close_loop, extend


def linearization(fun, z, eps=1e-6):
    cols = []
    for i in range(z.size):
        dz = np.zeros_like(z)
        dz[i] = eps * max(1.0, abs(z[i]))
        cols.append((fun(z + dz) - fun(z - dz)) / (2 * dz[i]))
    return np.column_stack(cols)


def main():
    p = BoostParams()
    sys_, _ = boost_converter(p)
    print(f"{'V*':>5} {'K':>6} {'s=+1':>11} {'s=-1':>11}")
    for v_star in (14.0, 18.0, 24.0, 30.0):
        eq = boost_equilibrium(p, v_star, sys_)
        z = np.r_[eq.x_star, eq.u_star]
        for k in (0.1, 1.0, 10.0):
            ctrl = KrasovskiiController(1.0, k, eq.u_star)
            row = []
            for s in (1, -1):
                cl = close_loop(extend(sys_), np.diag([p.L, p.C]), ctrl, eq, gain_sign=s)
                row.append(np.linalg.eigvals(linearization(cl.vector_field, z)).real.max())
            print(f"{v_star:5.1f} {k:6.1f} {row[0]:11.3e} {row[1]:11.3e}")


if __name__ == "__main__":
    main()
