"""Sweep the capacitor voltage across the set-B boundary and report the certificate margin.

The margin is the largest eigenvalue of the symmetrized drift Jacobian under
Q = diag(L, C); it must change sign at V = sqrt(P_bar / G). Repeated for a
few constant-power levels.
"""
import argparse

import numpy as np

from krasovskii import RlcZipParams, parallel_rlc_zip
from krasovskii.models import set_b_boundary
from krasovskii.passivity import prop1_margins


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2001)
    ap.add_argument("--p-bar", type=float, nargs="*", default=[0.05, 0.1, 0.5, 2.0])
    args = ap.parse_args()

    print(f"{'P_bar':>7} {'boundary':>10} {'flip at':>10} {'|gap|':>9} {'margin(0.5Vb)':>14} {'margin(2Vb)':>12}")
    for pb in args.p_bar:
        p = RlcZipParams(P_bar=pb)
        sys_, _ = parallel_rlc_zip(p)
        vb = set_b_boundary(p)
        V = np.linspace(0.5 * vb, 2.0 * vb, args.points)
        m = prop1_margins(sys_, np.diag([p.L, p.C]), np.column_stack([np.zeros_like(V), V]))
        k = np.flatnonzero(np.diff(np.sign(m)) != 0)
        # linear interpolation of the zero crossing
        flip = V[k[0]] - m[k[0]] * (V[k[0] + 1] - V[k[0]]) / (m[k[0] + 1] - m[k[0]]) if k.size else np.nan
        print(f"{pb:7.3f} {vb:10.5f} {flip:10.5f} {abs(flip - vb):9.1e} {m[0]:14.4e} {m[-1]:12.4e}")


if __name__ == "__main__":
    main()
