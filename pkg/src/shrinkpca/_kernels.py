"""Compiled inner loops: SVRG stochastic steps and cyclic Jacobi sweeps.

The SVRG inner loop is strictly sequential, so it is the one place where a
Python-level loop would dominate the runtime. Sample indices are drawn by the
caller from its own seeded stream; the kernels are deterministic.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def svrg_rank_one_steps(indptr, indices, data, lam, eta, y, mu, idx, ysum):
    """Run ``len(idx)`` steps of  y <- y - eta((lam I - x x^T) y + mu).

    ``y = z - anchor`` is the offset of the inner iterate from the anchor;
    tracking it instead of ``z`` keeps rounding relative to the (small)
    offset. ``y`` and ``ysum`` are updated in place; ``ysum`` accumulates the
    offsets produced by each step.
    """
    d = y.shape[0]
    for t in range(idx.shape[0]):
        i = idx[t]
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * y[indices[p]]
        for k in range(d):
            y[k] -= eta * (lam * y[k] + mu[k])
        es = eta * s
        for p in range(indptr[i], indptr[i + 1]):
            y[indices[p]] += es * data[p]
        for k in range(d):
            ysum[k] += y[k]


@njit(cache=True)
def svrg_ensemble_steps(rows, cols, vals, ptr, shifted, lam, eta, y, mu, idx, ysum):
    """Same recursion with components ``lam I - A_i`` (``A_i + I`` if shifted)."""
    d = y.shape[0]
    ay = np.empty(d)
    for t in range(idx.shape[0]):
        i = idx[t]
        for k in range(d):
            ay[k] = 0.0
        for p in range(ptr[i], ptr[i + 1]):
            ay[rows[p]] += vals[p] * y[cols[p]]
        if shifted:
            for k in range(d):
                ay[k] += y[k]
        for k in range(d):
            y[k] -= eta * (lam * y[k] - ay[k] + mu[k])
            ysum[k] += y[k]


@njit(cache=True)
def jacobi_eigh(a, tol, max_sweeps):
    """Cyclic Jacobi rotations on a symmetric matrix.

    Returns ``(diag, V, off, sweeps)`` with ``a ~= V diag(diag) V^T`` and
    ``off`` the final off-diagonal Frobenius norm.
    """
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    off = 0.0
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        off = np.sqrt(off)
        if off <= tol:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    diag = np.empty(n)
    for k in range(n):
        diag[k] = a[k, k]
    return diag, v, off, sweeps
