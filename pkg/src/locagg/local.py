"""Per-location B-subproblem solvers.

Each location minimises

    loss(y, Xt @ b) + lam_sm * b' Om b + lam_sp * ||S b||
        + 1/2 * sum_t rho_t (S b - z + u)_t^2

over ``b = [alpha; beta]``, where ``Xt = [1, X_l]`` and ``S`` drops the
intercept. The first entries of ``z`` and ``u`` are always zero.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import kernels
from .errors import LineSearchError, NonFiniteError, SingularSystemError, ValidationError
from .families import Family, loss
from .penalties import pad_intercept, second_difference_penalty


def with_intercept(X):
    X = np.asarray(X, dtype=float)
    return np.ascontiguousarray(np.column_stack([np.ones(X.shape[0]), X]))


@dataclass(eq=False)
class LocalProblem:
    Xt: np.ndarray
    y: np.ndarray
    family: Family
    lambda_sm: float
    lambda_sp: float
    omega_tilde: np.ndarray
    rho: np.ndarray
    z: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.family = Family.parse(self.family)
        p = self.Xt.shape[1]
        if self.lambda_sm < 0 or self.lambda_sp < 0:
            raise ValidationError("local penalty weights must be nonnegative")
        for name in ("rho", "z", "u"):
            if np.shape(getattr(self, name)) != (p,):
                raise ValidationError(f"{name} must have length {p}")
        if np.any(np.asarray(self.rho) < 0):
            raise ValidationError("rho must be nonnegative")

    @classmethod
    def standalone(cls, X, y, family, lambda_sm=0.0, lambda_sp=0.0, rho=0.0, z=None, u=None):
        """Build from a raw ``n x tau`` block (intercept column added here)."""
        Xt = with_intercept(X)
        p = Xt.shape[1]
        tau = p - 1
        omega = pad_intercept(second_difference_penalty(tau)) if tau >= 3 else np.zeros((p, p))
        rho = np.full(p, float(rho)) if np.ndim(rho) == 0 else np.asarray(rho, dtype=float)
        z = np.zeros(p) if z is None else np.asarray(z, dtype=float)
        u = np.zeros(p) if u is None else np.asarray(u, dtype=float)
        return cls(Xt, np.asarray(y, dtype=float), family, lambda_sm, lambda_sp, omega, rho, z, u)

    @property
    def dim(self):
        return self.Xt.shape[1]

    def smooth_objective(self, b):
        val = loss(self.family, self.y, self.Xt @ b)
        val += self.lambda_sm * float(b @ self.omega_tilde @ b)
        d = b[1:] - self.z[1:] + self.u[1:]
        return val + 0.5 * float(np.sum(self.rho[1:] * d * d))

    def objective(self, b):
        b = np.asarray(b, dtype=float)
        return self.smooth_objective(b) + self.lambda_sp * float(np.linalg.norm(b[1:]))


@dataclass(frozen=True)
class SolverControls:
    gamma: float = 0.5
    inner_tol: float = 1e-8
    max_inner_iters: int = 20000
    t_init: float = 1.0
    max_halvings: int = 60

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValidationError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.inner_tol > 0:
            raise ValidationError("inner_tol must be positive")
        if self.max_inner_iters < 1 or self.max_halvings < 0:
            raise ValidationError("iteration limits must be positive")


def solve_local_prox(problem, controls=None, beta_init=None, trace=None, backend=None):
    """Proximal gradient with backtracking; the prox never touches the intercept.

    Stops once ``||b - prox(b - t grad, lam_sp t)|| <= inner_tol``.
    Hitting ``max_inner_iters`` returns the current iterate.
    """
    controls = controls or SolverControls()
    p = problem.dim
    beta0 = np.zeros(p) if beta_init is None else np.asarray(beta_init, dtype=float)
    beta, _, status = kernels.prox_grad_solve(
        problem.Xt, problem.y, int(problem.family), float(problem.lambda_sm),
        problem.omega_tilde, float(problem.lambda_sp), problem.rho, problem.z, problem.u,
        beta0, controls.gamma, controls.t_init, controls.max_halvings, controls.inner_tol,
        controls.max_inner_iters, trace, backend=backend,
    )
    if status == kernels.STATUS_LINE_SEARCH:
        raise LineSearchError(
            f"backtracking exhausted {controls.max_halvings} halvings", last_iterate=beta
        )
    if status == kernels.STATUS_NON_FINITE:
        raise NonFiniteError("local objective is not finite at the starting point")
    return beta


def _direct_matrix(gram, omega_tilde, lambda_sm, rho):
    A = gram + 2.0 * lambda_sm * omega_tilde
    A[np.diag_indices_from(A)] += np.concatenate([[0.0], rho[1:]])
    return A


def _factor(A):
    try:
        c, low = linalg.cho_factor(A, lower=False, check_finite=False)
    except linalg.LinAlgError:
        raise SingularSystemError("local normal equations are singular") from None
    d = np.abs(np.diag(c))
    if d.min() <= 1e-7 * d.max():
        raise SingularSystemError(
            "local normal equations are numerically singular; add smoothing or rho"
        )
    return c, low


def solve_local_gaussian_direct(problem):
    """Closed form for Gaussian loss with smooth penalties only."""
    if problem.family is not Family.GAUSSIAN:
        raise ValidationError("direct solve requires the gaussian family")
    if problem.lambda_sp != 0:
        raise ValidationError("direct solve requires lambda_sp = 0")
    Xt = problem.Xt
    A = _direct_matrix(Xt.T @ Xt, problem.omega_tilde, problem.lambda_sm, problem.rho)
    rhs = Xt.T @ problem.y
    rhs[1:] += problem.rho[1:] * (problem.z[1:] - problem.u[1:])
    return linalg.cho_solve(_factor(A), rhs, check_finite=False)


class LocalSolver:
    """Holds one location's data and reuses work across ADMM iterations.

    Gaussian smooth problems go through a cached Cholesky factor that is
    rebuilt only when ``rho`` changes; everything else goes through the
    proximal-gradient kernel, warm-started from the previous solution.
    """

    def __init__(self, X, y, family, lambda_sm, lambda_sp, omega_tilde, controls=None,
                 backend=None):
        self.Xt = with_intercept(X)
        self.y = np.asarray(y, dtype=float)
        self.family = Family.parse(family)
        self.lambda_sm = float(lambda_sm)
        self.lambda_sp = float(lambda_sp)
        self.omega_tilde = omega_tilde
        self.controls = controls or SolverControls()
        self.backend = backend
        self.direct = self.family is Family.GAUSSIAN and self.lambda_sp == 0.0
        self.beta = np.zeros(self.Xt.shape[1])
        if self.direct:
            self._gram = self.Xt.T @ self.Xt
            self._xty = self.Xt.T @ self.y
            self._factor_key = None
            self._factor = None

    def problem(self, rho, z, u):
        return LocalProblem(self.Xt, self.y, self.family, self.lambda_sm, self.lambda_sp,
                            self.omega_tilde, rho, z, u)

    def solve(self, rho, z, u):
        if self.direct:
            key = rho.tobytes()
            if key != self._factor_key:
                A = _direct_matrix(self._gram, self.omega_tilde, self.lambda_sm, rho)
                self._factor = _factor(A)
                self._factor_key = key
            rhs = self._xty.copy()
            rhs[1:] += rho[1:] * (z[1:] - u[1:])
            beta = linalg.cho_solve(self._factor, rhs, check_finite=False)
        else:
            beta = solve_local_prox(self.problem(rho, z, u), self.controls, self.beta,
                                    backend=self.backend)
        self.beta = beta
        return beta

    def objective_terms(self, beta):
        """Loss plus local penalties (no proximity term)."""
        val = loss(self.family, self.y, self.Xt @ beta)
        val += self.lambda_sm * float(beta @ self.omega_tilde @ beta)
        return val + self.lambda_sp * float(np.linalg.norm(beta[1:]))
