"""Benchmarks: rho-adaptation schemes and the compiled vs pure-Python kernel."""

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .admm import AdmmConfig, PenaltyConfig, fit
from .data import SimulationSpec, simulate
from .local import LocalProblem, SolverControls
from .penalties import grid_graph

SCHEMES = ("vector", "scalar", "fixed")


@dataclass(frozen=True)
class RhoBenchSpec:
    n: int = 100
    tau: int = 30
    L: int = 16
    family: str = "gaussian"
    lambda_agg: float = 100.0
    lambda_sm: float = 1.0
    lambda_sp: float = 0.0
    rho_init: float = 1.0
    max_iters: int = 20000


def bench_rho_schemes(spec=None, seeds=range(10), schemes=SCHEMES):
    """Fit the same simulated problem under each scheme.

    Returns rows ``(seed, scheme, iterations, seconds, objective, converged)``.
    """
    spec = spec or RhoBenchSpec()
    graph = grid_graph(int(round(spec.L ** 0.5)))
    penalty = PenaltyConfig(spec.lambda_agg, spec.lambda_sm, spec.lambda_sp)
    rows = []
    for seed in seeds:
        ds, _ = simulate(SimulationSpec(n=spec.n, tau=spec.tau, L=spec.L, family=spec.family,
                                        seed=seed))
        for scheme in schemes:
            cfg = AdmmConfig(rho_init=spec.rho_init, adapt=scheme, max_iters=spec.max_iters)
            t0 = time.perf_counter()
            state, path = fit(ds, graph, penalty, cfg)
            elapsed = time.perf_counter() - t0
            rows.append((seed, scheme, state.k, elapsed, path.objective[-1], state.converged))
    return rows


def scheme_ordering(rows):
    """Per seed: whether iterations satisfy vector <= scalar <= fixed."""
    by_seed = {}
    for seed, scheme, iters, *_ in rows:
        by_seed.setdefault(seed, {})[scheme] = iters
    return {s: d["vector"] <= d["scalar"] <= d["fixed"] for s, d in by_seed.items()}


def _kernel_problem(n, tau, family, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, tau))
    eta = X @ (rng.standard_normal(tau) / np.sqrt(tau))
    y = eta + rng.standard_normal(n) if family == "gaussian" else (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    return LocalProblem.standalone(X, y, family, lambda_sm=1.0, lambda_sp=2.0, rho=1.0)


def bench_kernels(sizes=((100, 30), (200, 100)), families=("gaussian", "binomial"), repeats=3,
                  controls=None):
    """Time the local prox-gradient solve on each available backend.

    Returns rows ``(backend, family, n, tau, best_seconds, max_abs_diff_vs_python)``.
    """
    controls = controls or SolverControls(inner_tol=1e-10)
    backends = ["python"] + (["cython"] if kernels.compiled_available() else [])
    rows = []
    for family in families:
        for n, tau in sizes:
            prob = _kernel_problem(n, tau, family, seed=n * 1000 + tau)
            args = (prob.Xt, prob.y, int(prob.family), prob.lambda_sm, prob.omega_tilde,
                    prob.lambda_sp, prob.rho, prob.z, prob.u, np.zeros(prob.dim),
                    controls.gamma, controls.t_init, controls.max_halvings, controls.inner_tol,
                    controls.max_inner_iters)
            ref = None
            for backend in backends:
                best = np.inf
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    beta, _, _ = kernels.prox_grad_solve(*args, backend=backend)
                    best = min(best, time.perf_counter() - t0)
                if ref is None:
                    ref = beta
                rows.append((backend, family, n, tau, best, float(np.max(np.abs(beta - ref)))))
    return rows
