"""Dense reference solvers for small instances.

These build the full vectorised linear systems explicitly and are meant
only for checking the ADMM and the Z-update at desk scale.
"""

import numpy as np
from scipy import linalg

from .errors import ValidationError
from .families import Family, loss
from .local import with_intercept
from .penalties import intercept_selector


def gaussian_oracle(dataset, graph, penalty):
    """Exact minimiser for Gaussian loss with smooth penalties.

    Solves ``(blockdiag(Xt_l' Xt_l) + 2 lam_sm (I (x) Om) + 2 lam_agg (G (x) S)) vec(B)
    = stack(Xt_l' y)`` with ``vec`` stacking location columns.
    """
    if dataset.family is not Family.GAUSSIAN:
        raise ValidationError("the dense oracle covers the gaussian family only")
    lam_sm, lam_sp = penalty.local_weights(dataset.L)
    if np.any(lam_sp != 0):
        raise ValidationError("the dense oracle requires lambda_sp = 0")
    p, L = dataset.tau + 1, dataset.L
    omega_t = penalty.omega_tilde(dataset.tau)
    A = 2.0 * penalty.lambda_agg * np.kron(graph.G, intercept_selector(dataset.tau))
    rhs = np.empty(p * L)
    for l in range(L):
        Xt = with_intercept(dataset.blocks[l])
        sl = slice(l * p, (l + 1) * p)
        A[sl, sl] += Xt.T @ Xt + 2.0 * lam_sm[l] * omega_t
        rhs[sl] = Xt.T @ dataset.y
    vec = linalg.solve(A, rhs, assume_a="pos")
    return vec.reshape(L, p).T


def objective(dataset, graph, penalty, B):
    """Full objective with the aggregating term evaluated on ``S B``."""
    lam_sm, lam_sp = penalty.local_weights(dataset.L)
    omega_t = penalty.omega_tilde(dataset.tau)
    total = 0.0
    for l in range(dataset.L):
        b = B[:, l]
        Xt = with_intercept(dataset.blocks[l])
        total += loss(dataset.family, dataset.y, Xt @ b)
        total += lam_sm[l] * float(b @ omega_t @ b) + lam_sp[l] * float(np.linalg.norm(b[1:]))
    SB = B[1:]
    return total + penalty.lambda_agg * float(np.sum((SB @ graph.G) * SB))


def sylvester_dense(V, G, lambda_agg, rho):
    """Brute-force ``diag(rho) Z + 2 lambda_agg Z G = diag(rho) V`` via the vectorised system."""
    V = np.asarray(V, dtype=float)
    p, L = V.shape
    D = np.diag(np.asarray(rho, dtype=float) * np.ones(p))
    A = np.kron(np.eye(L), D) + 2.0 * lambda_agg * np.kron(np.asarray(G).T, np.eye(p))
    rhs = (D @ V).reshape(-1, order="F")
    return linalg.solve(A, rhs).reshape(p, L, order="F")
