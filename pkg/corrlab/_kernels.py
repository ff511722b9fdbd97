"""
_kernels.py
-----------
numba loops for the two O(nodes x steps) inner kernels:
- zero-energy marches (Numerov and the 3-point central recurrence)
- Crank-Nicolson tridiagonal sweep with a pre-factored left-hand side
"""
import numpy as np
from numba import njit

from corrlab.settings import numba_cache_enabled

_CACHE = numba_cache_enabled()


@njit(cache=_CACHE)
def numerov_march(f, h, u0, u1):
    """Integrate u'' = f u on a uniform grid from two starting values."""
    n = f.shape[0]
    u = np.empty(n)
    u[0] = u0
    u[1] = u1
    h2 = h * h / 12.0
    for i in range(1, n - 1):
        u[i + 1] = (2.0 * u[i] * (1.0 + 5.0 * h2 * f[i])
                    - u[i - 1] * (1.0 - h2 * f[i - 1])) / (1.0 - h2 * f[i + 1])
    return u


@njit(cache=_CACHE)
def central_march(f, h, u0, u1):
    """3-point recurrence u[i+1] - 2u[i] + u[i-1] = h^2 f[i] u[i]."""
    n = f.shape[0]
    u = np.empty(n)
    u[0] = u0
    u[1] = u1
    h2 = h * h
    for i in range(1, n - 1):
        u[i + 1] = (2.0 + h2 * f[i]) * u[i] - u[i - 1]
    return u


@njit(cache=_CACHE)
def thomas_factor(a_diag, a_off):
    """Forward-elimination coefficients of a symmetric tridiagonal matrix
    with constant off-diagonal `a_off`."""
    m = a_diag.shape[0]
    cp = np.empty(m, dtype=np.complex128)
    inv = np.empty(m, dtype=np.complex128)
    inv[0] = 1.0 / a_diag[0]
    cp[0] = a_off * inv[0]
    for i in range(1, m):
        inv[i] = 1.0 / (a_diag[i] - a_off * cp[i - 1])
        cp[i] = a_off * inv[i]
    return cp, inv


@njit(cache=_CACHE)
def cn_march(u, a_off, cp, inv, b_diag, b_off, nsteps):
    """Advance interior samples `u` by `nsteps` steps of A u+ = B u."""
    m = u.shape[0]
    x = u.copy()
    rhs = np.empty(m, dtype=np.complex128)
    dp = np.empty(m, dtype=np.complex128)
    for _ in range(nsteps):
        rhs[0] = b_diag[0] * x[0] + b_off * x[1]
        for i in range(1, m - 1):
            rhs[i] = b_diag[i] * x[i] + b_off * (x[i - 1] + x[i + 1])
        rhs[m - 1] = b_diag[m - 1] * x[m - 1] + b_off * x[m - 2]
        dp[0] = rhs[0] * inv[0]
        for i in range(1, m):
            dp[i] = (rhs[i] - a_off * dp[i - 1]) * inv[i]
        x[m - 1] = dp[m - 1]
        for i in range(m - 2, -1, -1):
            x[i] = dp[i] - cp[i] * x[i + 1]
    return x
