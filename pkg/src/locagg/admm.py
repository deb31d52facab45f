"""The three-step Local-Aggregate ADMM.

Each round solves every location's subproblem (in parallel), smooths the
consensus copy ``Z`` across the graph, and updates the scaled dual ``U``.
Coefficient matrices are ``(tau+1) x L`` with the intercept in row 0; the
consensus constraint is ``S B = Z`` so rows 0 of ``Z`` and ``U`` stay zero.

The coordinator-side bookkeeping lives in :class:`ConsensusEngine` so that
the in-process loop and the distributed coordinator run identical float
operations.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .data import TensorDataset
from .errors import NonFiniteError, ValidationError
from .local import LocalSolver, SolverControls
from .parallel import parallel_map
from .penalties import GraphPenalty, pad_intercept, second_difference_penalty


class Adapt(str, enum.Enum):
    FIXED = "fixed"
    SCALAR = "scalar"
    VECTOR = "vector"


def _per_location(value, L, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(L, float(arr))
    if arr.shape != (L,):
        raise ValidationError(f"{name} must be a scalar or have one entry per location ({L})")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite and nonnegative")
    return arr


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weights. ``lambda_sm`` and ``lambda_sp`` may vary by location."""

    lambda_agg: float = 0.0
    lambda_sm: object = 0.0
    lambda_sp: object = 0.0
    omega: np.ndarray = None

    def __post_init__(self):
        if not (self.lambda_agg >= 0 and math.isfinite(self.lambda_agg)):
            raise ValidationError(f"lambda_agg must be finite and >= 0, got {self.lambda_agg}")
        _per_location(self.lambda_sm, np.size(self.lambda_sm), "lambda_sm")
        _per_location(self.lambda_sp, np.size(self.lambda_sp), "lambda_sp")

    def local_weights(self, L):
        return _per_location(self.lambda_sm, L, "lambda_sm"), _per_location(self.lambda_sp, L, "lambda_sp")

    def omega_tilde(self, tau):
        if self.omega is not None:
            om = np.asarray(self.omega, dtype=float)
            if om.shape != (tau, tau):
                raise ValidationError(f"omega must be {tau}x{tau}, got {om.shape}")
            return pad_intercept(om)
        if tau >= 3:
            return pad_intercept(second_difference_penalty(tau))
        sm = np.asarray(self.lambda_sm, dtype=float)
        if np.any(sm > 0):
            raise ValidationError("temporal smoothing needs tau >= 3")
        return np.zeros((tau + 1, tau + 1))

    def with_lambda_agg(self, value):
        return PenaltyConfig(value, self.lambda_sm, self.lambda_sp, self.omega)


@dataclass(frozen=True)
class AdmmConfig:
    rho_init: float = 1.0
    adapt: Adapt = Adapt.VECTOR
    mu: float = 10.0
    tau_incr: float = 2.0
    tau_decr: float = 2.0
    freeze_after: int = 1000
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    max_iters: int = 5000
    min_iters: int = 0
    record_path: bool = False
    controls: SolverControls = field(default_factory=SolverControls)

    def __post_init__(self):
        object.__setattr__(self, "adapt", Adapt(self.adapt))
        if not self.rho_init > 0:
            raise ValidationError(f"rho_init must be positive, got {self.rho_init}")
        if not self.mu > 1:
            raise ValidationError(f"mu must exceed 1, got {self.mu}")
        if self.tau_incr < 1 or self.tau_decr < 1:
            raise ValidationError("tau_incr and tau_decr must be >= 1")
        if self.eps_abs < 0 or self.eps_rel < 0 or (self.eps_abs == 0 and self.eps_rel == 0):
            raise ValidationError("eps_abs and eps_rel must be >= 0 and not both zero")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.min_iters < 0 or self.freeze_after < 0:
            raise ValidationError("min_iters and freeze_after must be >= 0")

    def replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return AdmmConfig(**fields)


@dataclass
class CoefficientState:
    B: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    rho: np.ndarray
    k: int = 0
    r_norm: float = math.inf
    s_norm: float = math.inf
    r_t: np.ndarray = None
    s_t: np.ndarray = None
    eps_pr: float = math.inf
    eps_dual: float = math.inf
    converged: bool = False

    @property
    def intercepts(self):
        return self.B[0]

    @property
    def slopes(self):
        return self.B[1:]


@dataclass
class AlgorithmPath:
    """B after every outer iteration plus residual and objective traces.

    ``iterates`` is only populated when path recording is on; the traces
    are always kept. Index ``k - 1`` holds iteration ``k``.
    """

    iterates: list = field(default_factory=list)
    r_norm: list = field(default_factory=list)
    s_norm: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    rho: list = field(default_factory=list)

    def __len__(self):
        return len(self.r_norm)

    def snapshot(self, k):
        """The coefficient matrix after iteration ``k`` (1-based)."""
        if not self.iterates:
            raise ValidationError("path snapshots were not recorded")
        if not 1 <= k <= len(self.iterates):
            raise ValidationError(f"iterate {k} outside 1..{len(self.iterates)}")
        return self.iterates[k - 1]

    def aux(self):
        return np.column_stack([self.r_norm, self.s_norm, self.objective])


def selector_apply(B):
    """``S B``: copy with the intercept row zeroed."""
    SB = np.array(B, dtype=float, copy=True)
    SB[0] = 0.0
    return SB


def consensus_input(B, U):
    """``S B + U``, the quantity the Z-update smooths (and workers report)."""
    V = selector_apply(B)
    V += U
    return V


def _z_from_input(V, graph, lambda_agg, rho):
    if lambda_agg == 0 or graph.is_empty:
        return V.copy()
    lam, Q = graph.eigenvalues, graph.eigenvectors
    C = rho[:, None] * V
    Zt = (C @ Q) / (rho[:, None] + 2.0 * lambda_agg * lam[None, :])
    return Zt @ Q.T


def z_update_scalar(B, U, graph, lambda_agg, rho):
    """``Z = rho (SB + U)(2 lambda_agg G + rho I)^-1`` through the cached eigenbasis of G."""
    if not rho > 0:
        raise ValidationError(f"rho must be positive, got {rho}")
    V = consensus_input(B, U)
    return _z_from_input(V, graph, lambda_agg, np.full(V.shape[0], float(rho)))


def z_update_vector(B, U, graph, lambda_agg, rho):
    """Solve ``diag(rho) Z + 2 lambda_agg Z G = diag(rho)(SB + U)`` exactly.

    Diagonalising G decouples the Sylvester equation entrywise.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValidationError("every rho_t must be positive")
    V = consensus_input(B, U)
    return _z_from_input(V, graph, lambda_agg, rho)


def dual_update(U, B, Z):
    """``U + SB - Z``."""
    return (U + selector_apply(B)) - Z


def _row_norms(M):
    # accumulate in ascending location order so every backend sums identically
    acc = np.zeros(M.shape[0])
    for l in range(M.shape[1]):
        col = M[:, l]
        acc += col * col
    return np.sqrt(acc), math.sqrt(float(acc.sum()))


def residuals(B, Z, Z_prev, rho):
    """Primal ``SB - Z`` and dual ``diag(rho)(Z - Z_prev)`` norms, overall and per time row."""
    r = selector_apply(B) - Z
    s = np.asarray(rho, dtype=float)[:, None] * (Z - Z_prev)
    r_t, r_norm = _row_norms(r)
    s_t, s_norm = _row_norms(s)
    return r_norm, s_norm, r_t, s_t


def tolerances(B, Z, U, rho, eps_abs, eps_rel):
    scale = math.sqrt(Z.size)
    eps_pr = scale * eps_abs + eps_rel * max(
        float(np.linalg.norm(selector_apply(B))), float(np.linalg.norm(Z))
    )
    eps_dual = scale * eps_abs + eps_rel * float(np.linalg.norm(np.asarray(rho)[:, None] * U))
    return eps_pr, eps_dual


def adapt_rho(rho, r_norm, s_norm, r_t, s_t, config):
    """Residual balancing, globally (scalar) or per time row (vector)."""
    rho = np.asarray(rho, dtype=float)
    if config.adapt is Adapt.FIXED:
        return rho.copy()
    if config.adapt is Adapt.SCALAR:
        if r_norm > config.mu * s_norm:
            return rho * config.tau_incr
        if s_norm > config.mu * r_norm:
            return rho / config.tau_decr
        return rho.copy()
    out = rho.copy()
    up = r_t > config.mu * s_t
    down = s_t > config.mu * r_t
    out[up] *= config.tau_incr
    out[down] /= config.tau_decr
    return out


@dataclass
class RoundOutcome:
    stop: bool
    converged: bool
    rescale: np.ndarray = None


class ConsensusEngine:
    """Z, U and rho bookkeeping for one fit; fed ``B`` and ``SB + U`` each round."""

    def __init__(self, graph, tau, lambda_agg, config):
        p = tau + 1
        L = graph.n_locations
        self.graph = graph
        self.lambda_agg = float(lambda_agg)
        self.config = config
        self.state = CoefficientState(
            B=np.zeros((p, L)), Z=np.zeros((p, L)), U=np.zeros((p, L)),
            rho=np.full(p, float(config.rho_init)),
        )

    def step(self, B, V):
        st, cfg = self.state, self.config
        if not np.all(np.isfinite(B)):
            raise NonFiniteError(f"non-finite local coefficients at iteration {st.k + 1}")
        Z_prev = st.Z
        Z = _z_from_input(V, self.graph, self.lambda_agg, st.rho)
        U = V - Z
        st.k += 1
        st.B = B
        st.r_norm, st.s_norm, st.r_t, st.s_t = residuals(B, Z, Z_prev, st.rho)
        st.eps_pr, st.eps_dual = tolerances(B, Z, U, st.rho, cfg.eps_abs, cfg.eps_rel)
        st.converged = st.r_norm <= st.eps_pr and st.s_norm <= st.eps_dual
        stop = (st.converged and st.k >= cfg.min_iters) or st.k >= cfg.max_iters
        rescale = None
        if not stop and cfg.adapt is not Adapt.FIXED and st.k <= cfg.freeze_after:
            new_rho = adapt_rho(st.rho, st.r_norm, st.s_norm, st.r_t, st.s_t, cfg)
            if not np.array_equal(new_rho, st.rho):
                rescale = st.rho / new_rho
                U = U * rescale[:, None]
                st.rho = new_rho
        st.Z, st.U = Z, U
        return RoundOutcome(stop, st.converged, rescale)

    def objective(self, local_terms):
        """Local losses and penalties plus ``lambda_agg tr(Z G Z^T)``."""
        Z = self.state.Z
        agg = float(np.sum((Z @ self.graph.G) * Z)) if self.lambda_agg else 0.0
        return float(local_terms) + self.lambda_agg * agg


def make_local_solvers(dataset, penalty, controls=None, backend=None):
    lam_sm, lam_sp = penalty.local_weights(dataset.L)
    omega_t = penalty.omega_tilde(dataset.tau)
    return [
        LocalSolver(dataset.blocks[l], dataset.y, dataset.family, lam_sm[l], lam_sp[l], omega_t,
                    controls, backend)
        for l in range(dataset.L)
    ]


def check_compatible(dataset, graph):
    if not isinstance(dataset, TensorDataset):
        raise ValidationError("dataset must be a TensorDataset")
    if not isinstance(graph, GraphPenalty):
        raise ValidationError("graph must be a GraphPenalty")
    if graph.n_locations != dataset.L:
        raise ValidationError(
            f"graph has {graph.n_locations} locations but the dataset has {dataset.L}"
        )


def fit(dataset, graph, penalty, config=None, backend=None, threads=None, callback=None):
    """Run the ADMM to convergence or ``max_iters``.

    Returns ``(state, path)``. Hitting ``max_iters`` is not an error; check
    ``state.converged``. ``callback(state)`` is invoked after every round.
    """
    config = config or AdmmConfig()
    check_compatible(dataset, graph)
    solvers = make_local_solvers(dataset, penalty, config.controls, backend)
    engine = ConsensusEngine(graph, dataset.tau, penalty.lambda_agg, config)
    path = AlgorithmPath()
    L = dataset.L
    while True:
        st = engine.state
        rho, Z, U = st.rho, st.Z, st.U

        def solve(l):
            beta = solvers[l].solve(rho, Z[:, l], U[:, l])
            return beta, solvers[l].objective_terms(beta)

        results = parallel_map(solve, range(L), threads)
        B = np.column_stack([b for b, _ in results])
        local_terms = 0.0
        for _, val in results:
            local_terms += val
        outcome = engine.step(B, consensus_input(B, U))
        path.r_norm.append(st.r_norm)
        path.s_norm.append(st.s_norm)
        path.objective.append(engine.objective(local_terms))
        path.rho.append(st.rho.copy())
        if config.record_path:
            path.iterates.append(B)
        if callback is not None:
            callback(st)
        if outcome.stop:
            return st, path
