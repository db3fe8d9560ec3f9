"""Pure numpy/scipy implementations of the marching kernels.

These define the reference behaviour; ``_kernels_ext.pyx`` mirrors them
and must agree to rounding error.
"""
import numpy as np
from scipy.linalg import solve_banded


def tridiag_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system with partial pivoting.

    ``lower[i]`` multiplies ``x[i-1]`` in row ``i`` (``lower[0]`` unused),
    ``upper[i]`` multiplies ``x[i+1]`` (``upper[-1]`` unused).
    """
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def cyclic_tridiag_solve(lower, diag, upper, rhs):
    """Periodic tridiagonal solve: row 0 couples to ``x[-1]`` through
    ``lower[0]`` and row ``n-1`` couples to ``x[0]`` through ``upper[-1]``."""
    n = diag.shape[0]
    alpha = lower[0]
    beta = upper[-1]
    gamma = -diag[0] if diag[0] != 0.0 else 1.0
    d = diag.astype(float).copy()
    d[0] -= gamma
    d[-1] -= alpha * beta / gamma
    y = tridiag_solve(lower, d, upper, rhs)
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = beta
    z = tridiag_solve(lower, d, upper, u)
    vy = y[0] + alpha / gamma * y[-1]
    vz = z[0] + alpha / gamma * z[-1]
    return y - z * (vy / (1.0 + vz))


def leapfrog_solve(a, d, rhs, guess, inv_dt2, h, periodic):
    """Solve one implicit-in-mixed-term leapfrog level.

    Row ``j`` reads ``(inv_dt2 + d_j) U_j + a_j (D_s U)_j = rhs_j`` where
    ``D_s`` is the centred lateral difference, replaced by second-order
    one-sided differences at the two ends of a non-periodic run. The
    far point of each one-sided stencil is taken from ``guess``.
    """
    n = a.shape[0]
    c = a / (2.0 * h)
    diag = inv_dt2 + d
    lower = -c.copy()
    upper = c.copy()
    b = rhs.astype(float).copy()
    if periodic:
        return cyclic_tridiag_solve(lower, diag, upper, b)
    diag = diag.copy()
    diag[0] += -3.0 * c[0]
    upper[0] = 4.0 * c[0]
    b[0] += c[0] * guess[2]
    diag[-1] += 3.0 * c[-1]
    lower[-1] = -4.0 * c[-1]
    b[-1] -= c[-1] * guess[n - 3]
    return tridiag_solve(lower, diag, upper, b)


def lateral_d1(v, h, periodic):
    """First lateral derivative; second-order one-sided at open ends."""
    if periodic:
        return (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * h)
    out = np.empty_like(v, dtype=float)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return out


def lateral_d2(v, h, periodic):
    """Second lateral derivative; second-order one-sided at open ends
    (needs four points, three-point runs reuse the centred value)."""
    if periodic:
        return (np.roll(v, -1) - 2.0 * v + np.roll(v, 1)) / (h * h)
    n = v.shape[0]
    out = np.empty_like(v, dtype=float)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    if n >= 4:
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h)
        out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / (h * h)
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return out
