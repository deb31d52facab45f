"""Pure-numpy reference implementation of the local proximal-gradient kernel.

Mirrors ``_kernels.pyx`` operation for operation; used when the compiled
extension is unavailable or ``LOCAGG_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_LINE_SEARCH = 2
STATUS_NON_FINITE = 3


def _smooth_value(Xt, y, family, lam_sm, omega_t, rho, z, u, beta, eta):
    if family == 0:
        r = eta - y
        val = 0.5 * float(r @ r)
    else:
        val = float(np.sum(np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta))) - y * eta))
    if lam_sm != 0.0:
        val += lam_sm * float(beta @ (omega_t @ beta))
    d = beta[1:] - z[1:] + u[1:]
    val += 0.5 * float(np.sum(rho[1:] * d * d))
    return val


def _smooth_grad(Xt, y, family, lam_sm, omega_t, rho, z, u, beta, eta):
    if family == 0:
        resid = eta - y
    else:
        mu = np.empty_like(eta)
        pos = eta >= 0
        mu[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
        e = np.exp(eta[~pos])
        mu[~pos] = e / (1.0 + e)
        resid = mu - y
    g = Xt.T @ resid
    if lam_sm != 0.0:
        g += 2.0 * lam_sm * (omega_t @ beta)
    g[1:] += rho[1:] * (beta[1:] - z[1:] + u[1:])
    return g


def _prox_step(beta, g, t, lam_sp):
    cand = beta - t * g
    thr = lam_sp * t
    if thr > 0.0:
        norm = math.sqrt(float(cand[1:] @ cand[1:]))
        if norm <= thr:
            cand[1:] = 0.0
        else:
            cand[1:] *= 1.0 - thr / norm
    return cand


def prox_grad_solve(Xt, y, family, lam_sm, omega_t, lam_sp, rho, z, u, beta0,
                    gamma, t_init, max_halvings, tol, max_iter, trace=None):
    """Minimise smooth(beta) + lam_sp * ||beta[1:]||_2 from ``beta0``.

    Returns ``(beta, n_iter, status)``. ``trace``, if given, receives the full
    objective after every accepted step.
    """
    beta = np.array(beta0, dtype=float)
    eta = Xt @ beta
    f = _smooth_value(Xt, y, family, lam_sm, omega_t, rho, z, u, beta, eta)
    if not math.isfinite(f):
        return beta, 0, STATUS_NON_FINITE
    g = _smooth_grad(Xt, y, family, lam_sm, omega_t, rho, z, u, beta, eta)
    t = t_init
    n_trace = 0 if trace is None else len(trace)
    for it in range(max_iter):
        accepted = False
        for _ in range(max_halvings + 1):
            cand = _prox_step(beta, g, t, lam_sp)
            d = cand - beta
            dd = float(d @ d)
            if math.sqrt(dd) <= tol:
                return beta, it, STATUS_CONVERGED
            eta_c = Xt @ cand
            f_c = _smooth_value(Xt, y, family, lam_sm, omega_t, rho, z, u, cand, eta_c)
            g_c = None
            if math.isfinite(f_c):
                if f_c <= f + float(g @ d) + dd / (2.0 * t):
                    accepted = True
                    break
                # f is convex, so this gradient form implies the test above; it does not
                # suffer cancellation once f(cand) - f(beta) reaches rounding level
                g_c = _smooth_grad(Xt, y, family, lam_sm, omega_t, rho, z, u, cand, eta_c)
                if float((g_c - g) @ d) <= dd / (2.0 * t):
                    accepted = True
                    break
            t *= gamma
        if not accepted:
            return beta, it, STATUS_LINE_SEARCH
        beta, eta, f = cand, eta_c, f_c
        if it < n_trace:
            trace[it] = f + lam_sp * math.sqrt(float(beta[1:] @ beta[1:]))
        if g_c is None:
            g_c = _smooth_grad(Xt, y, family, lam_sm, omega_t, rho, z, u, beta, eta)
        g = g_c
    return beta, max_iter, STATUS_MAX_ITER
