# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled SCL loss/gradient kernel; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def batch_terms(const double[:, ::1] X, const long long[::1] labels,
                const long long[::1] flat, const long long[::1] offsets,
                Py_ssize_t k, double inv_tau, bint want_grad):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t nb = offsets.shape[0] - 1
    cdef Py_ssize_t b, a, c, t, m, start, ia, ic, ya, npos
    cdef double total = 0.0, mx, se, ps, s, w
    cdef long long[::1] cnt = np.zeros(k, dtype=np.int64)
    cdef double[:, ::1] grad_v
    cdef double[:, ::1] S
    cdef double[:, ::1] A
    grad = None
    if want_grad:
        grad = np.zeros((n, d))
        grad_v = grad

    for b in range(nb):
        start = offsets[b]
        m = offsets[b + 1] - start
        for a in range(m):
            cnt[labels[flat[start + a]]] += 1

        S = np.empty((m, m))
        for a in range(m):
            ia = flat[start + a]
            for c in range(a, m):
                ic = flat[start + c]
                s = 0.0
                for t in range(d):
                    s += X[ia, t] * X[ic, t]
                s *= inv_tau
                S[a, c] = s
                S[c, a] = s

        # row a of A: softmax over l != a, then minus 1/npos on positives
        A = np.zeros((m, m))
        for a in range(m):
            ya = labels[flat[start + a]]
            if cnt[ya] < 2:
                continue
            npos = cnt[ya] - 1
            mx = -INFINITY
            for c in range(m):
                if c != a and S[a, c] > mx:
                    mx = S[a, c]
            se = 0.0
            ps = 0.0
            for c in range(m):
                if c == a:
                    continue
                w = exp(S[a, c] - mx)
                A[a, c] = w
                se += w
                if labels[flat[start + c]] == ya:
                    ps += S[a, c]
            total += mx + log(se) - ps / npos
            if want_grad:
                for c in range(m):
                    if c == a:
                        continue
                    w = A[a, c] / se
                    if labels[flat[start + c]] == ya:
                        w -= 1.0 / npos
                    A[a, c] = w

        if want_grad:
            # gradient weights (A + A^T) / tau, scattered over the upper triangle
            for a in range(m):
                ia = flat[start + a]
                for c in range(a + 1, m):
                    w = (A[a, c] + A[c, a]) * inv_tau
                    if w == 0.0:
                        continue
                    ic = flat[start + c]
                    for t in range(d):
                        grad_v[ia, t] += w * X[ic, t]
                        grad_v[ic, t] += w * X[ia, t]

        for a in range(m):
            cnt[labels[flat[start + a]]] = 0

    return total, grad
