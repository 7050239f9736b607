"""Compiled inner loops. Arithmetic here mirrors QuantileEstimator.update
operation for operation; the two paths must stay bit-identical."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def run_rounds(x, u, v, r, tau, a, beta, c, n, q, qbar, va, vb, va_c, vb_c, compensated):
    up = (1.0 - r + 2.0 * tau * r) / 2.0
    down = (1.0 + r - 2.0 * tau * r) / 2.0
    for i in range(x.shape[0]):
        n += 1
        if u[i] < r:
            bit = x[i] > q
        else:
            bit = v[i] < 0.5
        d = a / (float(n) ** beta + c)
        if bit:
            q = q + up * d
        else:
            q = q - down * d
        qbar = qbar + (q - qbar) / n
        nn = float(n * n)
        ta = nn * qbar * qbar
        tb = nn * qbar
        if compensated:
            s = va + ta
            if abs(va) >= abs(ta):
                va_c += (va - s) + ta
            else:
                va_c += (ta - s) + va
            va = s
            s = vb + tb
            if abs(vb) >= abs(tb):
                vb_c += (vb - s) + tb
            else:
                vb_c += (tb - s) + vb
            vb = s
        else:
            va = va + ta
            vb = vb + tb
    return n, q, qbar, va, vb, va_c, vb_c


@njit(cache=True, nogil=True)
def run_rounds_traced(x, u, v, r, tau, a, beta, c, q0):
    """Plain run from a fresh state that also returns every iterate."""
    up = (1.0 - r + 2.0 * tau * r) / 2.0
    down = (1.0 + r - 2.0 * tau * r) / 2.0
    m = x.shape[0]
    qs = np.empty(m)
    q = q0
    for i in range(m):
        n = i + 1
        if u[i] < r:
            bit = x[i] > q
        else:
            bit = v[i] < 0.5
        d = a / (float(n) ** beta + c)
        if bit:
            q = q + up * d
        else:
            q = q - down * d
        qs[i] = q
    return qs
