"""Small dense symmetric eigenproblems by cyclic Jacobi rotations.

The matrices certified in this package are tiny (n <= ~20), so a plain
cyclic Jacobi sweep is accurate to the last few ulps and has no external
dependencies beyond numpy arrays.
"""
import math

import numpy as np


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def is_symmetric(a, atol=1e-12):
    a = np.asarray(a, dtype=float)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and bool(np.all(np.abs(a - a.T) <= atol))


def jacobi_eigh(a, tol=1e-12, max_sweeps=64, vectors=False):
    """Eigenvalues (ascending) of a symmetric matrix.

    Sweeps rotate away every off-diagonal pair in row-cyclic order until the
    off-diagonal Frobenius norm drops below ``tol`` times the Frobenius norm
    of ``a``. With ``vectors=True`` the orthogonal eigenvector matrix is
    returned as well, columns matching the sorted eigenvalues.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    v = np.eye(n)
    if n == 0:
        return (np.zeros(0), v) if vectors else np.zeros(0)
    a = 0.5 * (a + a.T)
    scale = math.sqrt(float(np.sum(a * a)))
    threshold = tol * scale

    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Rotation angle from the symmetric 2x2 Schur decomposition
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                if vectors:
                    vp = v[:, p].copy()
                    vq = v[:, q].copy()
                    v[:, p] = c * vp - s * vq
                    v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi sweeps did not converge")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    if vectors:
        return w[order], v[:, order]
    return w[order]


def max_eig(a):
    """Largest eigenvalue of a symmetric matrix."""
    if np.shape(a)[0] == 1:
        return float(np.asarray(a, dtype=float)[0, 0])
    return float(jacobi_eigh(a)[-1])


def min_eig(a):
    if np.shape(a)[0] == 1:
        return float(np.asarray(a, dtype=float)[0, 0])
    return float(jacobi_eigh(a)[0])
