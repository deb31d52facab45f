# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled local proximal-gradient kernel.

Same algorithm and return contract as ``_kernels_py.prox_grad_solve``; the
whole inner loop (matvecs, backtracking, prox) runs without the GIL.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs, sqrt, isfinite
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

cdef enum:
    STATUS_CONVERGED = 0
    STATUS_MAX_ITER = 1
    STATUS_LINE_SEARCH = 2
    STATUS_NON_FINITE = 3


cdef inline void _matvec(const double[:, ::1] X, const double[::1] b, double[::1] out) noexcept nogil:
    # row-major n x p is column-major p x n, so X @ b is a transposed gemv
    cdef char trans = b'T'
    cdef int m = <int>X.shape[1], n = <int>X.shape[0], one = 1
    cdef double alpha = 1.0, beta = 0.0
    dgemv(&trans, &m, &n, &alpha, <double*>&X[0, 0], &m, <double*>&b[0], &one, &beta,
          &out[0], &one)


cdef inline void _rmatvec(const double[:, ::1] X, const double[::1] r, double[::1] out) noexcept nogil:
    # out = X.T @ r
    cdef char trans = b'N'
    cdef int m = <int>X.shape[1], n = <int>X.shape[0], one = 1
    cdef double alpha = 1.0, beta = 0.0
    dgemv(&trans, &m, &n, &alpha, <double*>&X[0, 0], &m, <double*>&r[0], &one, &beta,
          &out[0], &one)


cdef double _smooth_value(const double[:, ::1] X, const double[::1] y, int family,
                          double lam_sm, const double[:, ::1] om, const double[::1] rho,
                          const double[::1] z, const double[::1] u,
                          const double[::1] beta, const double[::1] eta) noexcept nogil:
    cdef Py_ssize_t i, j, n = X.shape[0], p = X.shape[1]
    cdef double val = 0.0, r, e, acc, d
    if family == 0:
        for i in range(n):
            r = eta[i] - y[i]
            val += r * r
        val *= 0.5
    else:
        for i in range(n):
            e = eta[i]
            val += (e if e > 0.0 else 0.0) + log1p(exp(-fabs(e))) - y[i] * e
    if lam_sm != 0.0:
        acc = 0.0
        for i in range(p):
            r = 0.0
            for j in range(p):
                r += om[i, j] * beta[j]
            acc += beta[i] * r
        val += lam_sm * acc
    acc = 0.0
    for j in range(1, p):
        d = beta[j] - z[j] + u[j]
        acc += rho[j] * d * d
    return val + 0.5 * acc


cdef void _smooth_grad(const double[:, ::1] X, const double[::1] y, int family,
                       double lam_sm, const double[:, ::1] om, const double[::1] rho,
                       const double[::1] z, const double[::1] u,
                       const double[::1] beta, const double[::1] eta,
                       double[::1] resid, double[::1] g) noexcept nogil:
    cdef Py_ssize_t i, j, n = X.shape[0], p = X.shape[1]
    cdef double e, acc
    if family == 0:
        for i in range(n):
            resid[i] = eta[i] - y[i]
    else:
        for i in range(n):
            e = eta[i]
            if e >= 0.0:
                resid[i] = 1.0 / (1.0 + exp(-e)) - y[i]
            else:
                e = exp(e)
                resid[i] = e / (1.0 + e) - y[i]
    _rmatvec(X, resid, g)
    if lam_sm != 0.0:
        for i in range(p):
            acc = 0.0
            for j in range(p):
                acc += om[i, j] * beta[j]
            g[i] += 2.0 * lam_sm * acc
    for j in range(1, p):
        g[j] += rho[j] * (beta[j] - z[j] + u[j])


cdef int _solve(const double[:, ::1] X, const double[::1] y, int family, double lam_sm,
                const double[:, ::1] om, double lam_sp, const double[::1] rho,
                const double[::1] z, const double[::1] u, double[::1] beta,
                double gamma, double t_init, int max_halvings, double tol, int max_iter,
                double[::1] trace, int n_trace,
                double[::1] eta, double[::1] eta_c, double[::1] cand,
                double[::1] g, double[::1] g_c, double[::1] resid,
                int* n_iter) noexcept nogil:
    cdef Py_ssize_t j, n = X.shape[0], p = X.shape[1]
    cdef int it, h
    cdef bint accepted, have_gc = False
    cdef double f, f_c, t = t_init, thr, norm, dd, gd, d
    _matvec(X, beta, eta)
    f = _smooth_value(X, y, family, lam_sm, om, rho, z, u, beta, eta)
    n_iter[0] = 0
    if not isfinite(f):
        return STATUS_NON_FINITE
    _smooth_grad(X, y, family, lam_sm, om, rho, z, u, beta, eta, resid, g)
    for it in range(max_iter):
        n_iter[0] = it
        accepted = False
        for h in range(max_halvings + 1):
            for j in range(p):
                cand[j] = beta[j] - t * g[j]
            thr = lam_sp * t
            if thr > 0.0:
                norm = 0.0
                for j in range(1, p):
                    norm += cand[j] * cand[j]
                norm = sqrt(norm)
                if norm <= thr:
                    for j in range(1, p):
                        cand[j] = 0.0
                else:
                    for j in range(1, p):
                        cand[j] *= 1.0 - thr / norm
            dd = 0.0
            gd = 0.0
            for j in range(p):
                d = cand[j] - beta[j]
                dd += d * d
                gd += g[j] * d
            if sqrt(dd) <= tol:
                return STATUS_CONVERGED
            _matvec(X, cand, eta_c)
            f_c = _smooth_value(X, y, family, lam_sm, om, rho, z, u, cand, eta_c)
            have_gc = False
            if isfinite(f_c):
                if f_c <= f + gd + dd / (2.0 * t):
                    accepted = True
                    break
                # f is convex, so this gradient form implies the test above; it does not
                # suffer cancellation once f(cand) - f(beta) reaches rounding level
                _smooth_grad(X, y, family, lam_sm, om, rho, z, u, cand, eta_c, resid, g_c)
                have_gc = True
                gd = 0.0
                for j in range(p):
                    gd += (g_c[j] - g[j]) * (cand[j] - beta[j])
                if gd <= dd / (2.0 * t):
                    accepted = True
                    break
            t *= gamma
        if not accepted:
            return STATUS_LINE_SEARCH
        for j in range(p):
            beta[j] = cand[j]
        for j in range(n):
            eta[j] = eta_c[j]
        f = f_c
        if it < n_trace:
            norm = 0.0
            for j in range(1, p):
                norm += beta[j] * beta[j]
            trace[it] = f + lam_sp * sqrt(norm)
        if have_gc:
            for j in range(p):
                g[j] = g_c[j]
        else:
            _smooth_grad(X, y, family, lam_sm, om, rho, z, u, beta, eta, resid, g)
    n_iter[0] = max_iter
    return STATUS_MAX_ITER


def prox_grad_solve(Xt, y, int family, double lam_sm, omega_t, double lam_sp, rho, z, u,
                    beta0, double gamma, double t_init, int max_halvings, double tol,
                    int max_iter, trace=None):
    cdef const double[:, ::1] X = np.ascontiguousarray(Xt, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:, ::1] om = np.ascontiguousarray(omega_t, dtype=np.float64)
    cdef const double[::1] rv = np.ascontiguousarray(rho, dtype=np.float64)
    cdef const double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    out = np.array(beta0, dtype=np.float64, copy=True)
    cdef double[::1] beta = out
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1]
    cdef double[::1] eta = np.empty(n)
    cdef double[::1] eta_c = np.empty(n)
    cdef double[::1] cand = np.empty(p)
    cdef double[::1] g = np.empty(p)
    cdef double[::1] g_c = np.empty(p)
    cdef double[::1] resid = np.empty(n)
    cdef double[::1] tr
    cdef int n_trace = 0
    if trace is not None:
        tr = trace
        n_trace = tr.shape[0]
    else:
        tr = np.empty(1)
    cdef int n_iter = 0
    cdef int status
    with nogil:
        status = _solve(X, yv, family, lam_sm, om, lam_sp, rv, zv, uv, beta, gamma, t_init,
                        max_halvings, tol, max_iter, tr, n_trace, eta, eta_c, cand, g, g_c, resid,
                        &n_iter)
    return out, n_iter, status
