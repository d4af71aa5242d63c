"""Compiled inner loops over blocks of single-axis bridges.

Every kernel takes a 2-D array of rows (one bridge per row) and an optional
stride, so coarser nested levels can be read from a fine bridge without
copying.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def vloop_rows(z, coef, out):
    # out[:, k] = (N-k) * cumsum(z*coef)[k-1]; same summation order as np.cumsum
    rows, m = z.shape
    n = m + 1
    for i in range(rows):
        acc = 0.0
        out[i, 0] = 0.0
        for k in range(1, n):
            acc += z[i, k - 1] * coef[k - 1]
            out[i, k] = (n - k) * acc
        out[i, n] = 0.0


@numba.njit(cache=True)
def row_extremes(b, stride):
    rows = b.shape[0]
    lo = np.empty(rows)
    hi = np.empty(rows)
    last = b.shape[1]
    for i in range(rows):
        mn = 0.0
        mx = 0.0
        for k in range(0, last, stride):
            v = b[i, k]
            if v < mn:
                mn = v
            if v > mx:
                mx = v
        lo[i] = mn
        hi[i] = mx
    return lo, hi


@numba.njit(cache=True)
def occupation_rows(b, thresh, side, stride):
    """Trapezoid and straight-segment occupation fractions past ``thresh``.

    A node counts as inside when side*(b - thresh) >= 0. Rows with a
    non-finite threshold are returned as zero.
    """
    rows = b.shape[0]
    n_nodes = (b.shape[1] - 1) // stride
    trap = np.zeros(rows)
    interp = np.zeros(rows)
    for i in range(rows):
        c = thresh[i]
        if not np.isfinite(c):
            continue
        nt = 0
        acc = 0.0
        a = side * (b[i, 0] - c)
        for j in range(n_nodes):
            e = side * (b[i, (j + 1) * stride] - c)
            if a >= 0.0:
                nt += 1
            if a >= 0.0 and e >= 0.0:
                acc += 1.0
            elif a >= 0.0 or e >= 0.0:
                hi = a if a > e else e
                lo = e if a > e else a
                acc += hi / (hi - lo)
            a = e
        trap[i] = nt / n_nodes
        interp[i] = acc / n_nodes
    return trap, interp


@numba.njit(cache=True, inline="always")
def _stencil(x, n):
    i = int(np.floor(x))
    t = x - i
    t2 = t * t
    t3 = t2 * t
    w0 = (1.0 - t) ** 3 / 6.0
    w1 = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0
    w2 = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0
    w3 = t3 / 6.0
    i0 = min(max(i - 1, 0), n - 1)
    i1 = min(max(i, 0), n - 1)
    i2 = min(max(i + 1, 0), n - 1)
    i3 = min(max(i + 2, 0), n - 1)
    return i0, i1, i2, i3, w0, w1, w2, w3


@numba.njit(cache=True)
def one_sided_products(coef_t, scale, kappa, p, rows, e_s, mirrored, prod):
    """prod[row] *= 1-p+p*phi (or e^{-S}(1-p)+p*psi) for each segment.

    ``coef_t`` holds cubic-spline coefficients of shape (n_kappa, nS) on a
    grid uniform in sqrt(kappa); ``scale`` maps sqrt(kappa) to the index.
    """
    n, ns = coef_t.shape
    for j in range(kappa.size):
        i0, i1, i2, i3, w0, w1, w2, w3 = _stencil(np.sqrt(kappa[j]) * scale, n)
        r = rows[j]
        pj = p[j]
        for s in range(ns):
            val = w0 * coef_t[i0, s] + w1 * coef_t[i1, s] + w2 * coef_t[i2, s] + w3 * coef_t[i3, s]
            val = min(max(val, 0.0), 1.0)
            if mirrored:
                prod[r, s] *= e_s[s] * (1.0 - pj) + pj * val
            else:
                prod[r, s] *= 1.0 - pj + pj * val


@numba.njit(cache=True)
def crossing_products(coef_t, scale, u, v, rows, prod):
    """prod[row] *= M_cross(u, v) from a (n, n, nS) spline-coefficient cube."""
    n = coef_t.shape[0]
    ns = coef_t.shape[2]
    for j in range(u.size):
        a0, a1, a2, a3, x0, x1, x2, x3 = _stencil(np.sqrt(u[j]) * scale, n)
        b0, b1, b2, b3, y0, y1, y2, y3 = _stencil(np.sqrt(v[j]) * scale, n)
        ia = (a0, a1, a2, a3)
        wa = (x0, x1, x2, x3)
        ib = (b0, b1, b2, b3)
        wb = (y0, y1, y2, y3)
        r = rows[j]
        for s in range(ns):
            val = 0.0
            for k in range(4):
                row = 0.0
                for m in range(4):
                    row += coef_t[ia[k], ib[m], s] * wb[m]
                val += row * wa[k]
            prod[r, s] *= min(max(val, 0.0), 1.0)
