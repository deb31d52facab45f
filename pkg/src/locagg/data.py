"""Tensor datasets, simulation generators and cross-validation folds.

Random streams
--------------
Every stochastic stage draws from a Philox (counter-based, 64-bit key)
generator keyed by ``SeedSequence(seed, spawn_key=(stream, index))``:

* stream 1, index ``i``: covariate draws for subject ``i``
* stream 2, index 0: response noise
* stream 3, index 0: fold permutation

A subject's covariates therefore depend only on ``(seed, i)``, so serial and
distributed generation of any subset of subjects agree bit for bit.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import CovarianceError, ValidationError
from .families import Family, sigmoid

STREAM_COVARIATES = 1
STREAM_NOISE = 2
STREAM_FOLDS = 3


def philox(seed, stream, index=0):
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream, index))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(eq=False)
class TensorDataset:
    """Covariate tensor ``n x tau x L`` stored location-major, plus responses.

    ``blocks[l]`` is the ``n x tau`` matrix of location ``l``.
    """

    blocks: np.ndarray
    y: np.ndarray
    family: Family = Family.GAUSSIAN

    def __post_init__(self):
        if isinstance(self.blocks, (list, tuple)):
            shapes = {np.shape(b) for b in self.blocks}
            if len(shapes) > 1:
                raise ValidationError(f"location blocks differ in shape: {sorted(shapes)}")
        blocks = np.asarray(self.blocks, dtype=np.float64)
        if blocks.ndim != 3:
            raise ValidationError(f"blocks must be L x n x tau, got shape {blocks.shape}")
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        self.family = Family.parse(self.family)
        L, n, tau = blocks.shape
        if y.shape[0] != n:
            raise ValidationError(f"y has length {y.shape[0]} but blocks have n={n} rows")
        if not (np.all(np.isfinite(blocks)) and np.all(np.isfinite(y))):
            raise ValidationError("dataset contains non-finite values")
        if self.family is Family.BINOMIAL and not np.all((y == 0) | (y == 1)):
            raise ValidationError("binomial responses must be 0 or 1")
        self.blocks = np.ascontiguousarray(blocks)
        self.y = y

    @property
    def n(self):
        return self.blocks.shape[1]

    @property
    def tau(self):
        return self.blocks.shape[2]

    @property
    def L(self):
        return self.blocks.shape[0]

    def slice_location(self, l):
        return self.blocks[l]

    def subset(self, rows):
        rows = np.asarray(rows)
        return TensorDataset(self.blocks[:, rows, :], self.y[rows], self.family)

    def with_responses(self, y):
        return TensorDataset(self.blocks, y, self.family)

    def unfolded(self):
        """Mode-1 matricization ``n x (tau*L)`` matching column-major ``vec(B)``."""
        return np.concatenate(list(self.blocks), axis=1)

    def linear_predictor(self, B):
        """``X_(1) vec(B)`` for a ``tau x L`` coefficient matrix."""
        return np.einsum("lnt,tl->n", self.blocks, np.asarray(B, dtype=float))


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    tau: int
    L: int
    rank: int = 2
    theta_t: float = 200.0
    theta_l: float = 2.0
    snr: float = 10.0
    family: Family = Family.GAUSSIAN
    seed: int = 0
    spatial: str = "blocks"

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.n < 1 or self.tau < 1 or self.L < 1:
            raise ValidationError("n, tau and L must be positive")
        if self.rank < 1:
            raise ValidationError(f"rank must be >= 1, got {self.rank}")
        # theta == 0 is accepted as the uncorrelated limit (identity covariance)
        if self.theta_t < 0 or self.theta_l < 0:
            raise ValidationError("kernel bandwidths must be positive (0 means uncorrelated)")
        if not self.snr > 0:
            raise ValidationError(f"snr must be positive, got {self.snr}")
        if self.spatial not in ("blocks", "smooth"):
            raise ValidationError(f"unknown spatial pattern {self.spatial!r}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")

    @property
    def side(self):
        return math.isqrt(self.L)


@dataclass(eq=False)
class SignalMatrix:
    """Low-rank signal ``B_o = sum_r v_r u_r^T`` (``tau x L``)."""

    spatial: np.ndarray   # R x L
    temporal: np.ndarray  # R x tau
    scale: float = 1.0
    B: np.ndarray = field(init=False)

    def __post_init__(self):
        self.spatial = np.atleast_2d(np.asarray(self.spatial, dtype=float))
        self.temporal = np.atleast_2d(np.asarray(self.temporal, dtype=float))
        self.B = self.scale * (self.temporal.T @ self.spatial)

    @property
    def rank(self):
        return self.spatial.shape[0]

    def scaled(self, c):
        return SignalMatrix(self.spatial, self.temporal, self.scale * c)

    def support(self):
        """Locations whose true coefficient vector is nonzero."""
        return np.linalg.norm(self.B, axis=0) > 0


def block_cells(side):
    """Row-major location indices of the two diagonal-corner blocks."""
    k = max(2, side // 5)
    if 2 * k > side:
        raise ValidationError(f"grid side {side} too small for two {k}x{k} blocks")
    first = [i * side + j for i in range(k) for j in range(k)]
    last = [i * side + j for i in range(side - k, side) for j in range(side - k, side)]
    return np.array(first), np.array(last)


def _gram_schmidt_against(vec, basis):
    for b in basis:
        vec = vec - (vec @ b) / (b @ b) * b
    return vec


def _block_spatial_factors(side, R):
    L = side * side
    a, b = block_cells(side)
    cells = np.concatenate([a, b])
    if R > cells.size:
        raise ValidationError(f"rank {R} exceeds the {cells.size} locations inside the blocks")
    factors = []
    u1 = np.zeros(L)
    u1[cells] = 1.0
    factors.append(u1)
    if R >= 2:
        u2 = np.zeros(L)
        u2[a] = 1.0
        u2[b] = -1.0
        factors.append(u2)
    m = cells.size
    for r in range(3, R + 1):
        # slightly different spatial frequency per extra factor, then orthogonalize
        vals = np.cos(np.pi * (r - 1.5) * (np.arange(m) + 0.5) / m)
        u = np.zeros(L)
        u[cells] = vals
        u = _gram_schmidt_against(u, factors)
        factors.append(u)
    return np.array(factors)


def _smooth_spatial_factors(side, R):
    grid = (np.arange(side) + 0.5) / side
    pairs = [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (1, 3), (3, 2), (2, 3), (3, 3)]
    if R > len(pairs):
        raise ValidationError(f"smooth spatial signal supports rank <= {len(pairs)}")
    factors = []
    for a, b in pairs[:R]:
        u = np.outer(np.sin(np.pi * a * grid), np.sin(np.pi * b * grid)).reshape(-1)
        factors.append(_gram_schmidt_against(u, factors))
    return np.array(factors)


def _temporal_factors(tau, R):
    t = np.arange(tau) / tau
    factors = []
    for r in range(1, R + 1):
        freq = r if r <= 2 else r + 0.5
        v = np.cos(2.0 * np.pi * freq * t)
        factors.append(_gram_schmidt_against(v, factors))
    return np.array(factors)


def simulate_signal(spec):
    """Rank-``R`` spatio-temporal signal on the ``sqrt(L) x sqrt(L)`` grid."""
    side = spec.side
    if side * side != spec.L:
        raise ValidationError(f"L={spec.L} is not a perfect square; the signal lives on a square grid")
    if spec.spatial == "blocks":
        U = _block_spatial_factors(side, spec.rank)
    else:
        U = _smooth_spatial_factors(side, spec.rank)
    V = _temporal_factors(spec.tau, spec.rank)
    return SignalMatrix(U, V)


def exponential_kernel(D, theta):
    if theta == 0:
        return np.eye(D.shape[0])
    return np.exp(-(D * D) / theta)


def temporal_covariance(tau, theta):
    t = np.arange(tau, dtype=float)
    return exponential_kernel(np.abs(t[:, None] - t[None, :]), theta)


def spatial_covariance(L, theta):
    side = math.isqrt(L)
    if side * side != L:
        raise ValidationError(f"L={L} is not a perfect square")
    ii, jj = np.divmod(np.arange(L), side)
    coords = np.column_stack([ii, jj]).astype(float)
    diff = coords[:, None, :] - coords[None, :, :]
    return exponential_kernel(np.sqrt(np.sum(diff * diff, axis=-1)), theta)


def jittered_cholesky(cov, jitter=1e-10, retries=3):
    """Cholesky factor, retrying with ``jitter * 10^k * I`` for ``k < retries``."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(cov.shape[0])
    for k in range(retries):
        try:
            return np.linalg.cholesky(cov + jitter * 10.0**k * eye)
        except np.linalg.LinAlgError:
            continue
    raise CovarianceError(
        f"covariance not positive definite after {retries} jitter retries "
        f"(largest jitter {jitter * 10.0 ** (retries - 1):g})"
    )


def simulate_covariates(spec):
    """Matrix-normal subjects ``X_i = A_T N A_L^T``; returns the ``L x n x tau`` block array."""
    A_T = jittered_cholesky(temporal_covariance(spec.tau, spec.theta_t))
    A_L = jittered_cholesky(spatial_covariance(spec.L, spec.theta_l))
    blocks = np.empty((spec.L, spec.n, spec.tau))
    for i in range(spec.n):
        N = philox(spec.seed, STREAM_COVARIATES, i).standard_normal((spec.tau, spec.L))
        blocks[:, i, :] = (A_T @ N @ A_L.T).T
    return blocks


def signal_scale(blocks, signal, snr):
    """Scalar ``c`` making the empirical variance of ``X_(1) vec(c B_o)`` equal ``snr``."""
    eta = np.einsum("lnt,tl->n", blocks, signal.B)
    var = float(np.var(eta))
    if var == 0.0:
        raise ValidationError("signal has zero-variance linear predictor; cannot calibrate SNR")
    return math.sqrt(snr / var)


def simulate_responses(blocks, signal, spec, calibrate=True):
    """Draw responses; with ``calibrate`` the signal is first rescaled to hit ``spec.snr``.

    Returns ``(y, signal)`` where ``signal`` is the (possibly rescaled) truth.
    """
    if calibrate:
        signal = signal.scaled(signal_scale(blocks, signal, spec.snr))
    eta = np.einsum("lnt,tl->n", blocks, signal.B)
    rng = philox(spec.seed, STREAM_NOISE)
    if spec.family is Family.GAUSSIAN:
        y = eta + rng.standard_normal(eta.shape[0])
    else:
        y = (rng.random(eta.shape[0]) < sigmoid(eta)).astype(float)
    return y, signal


def simulate(spec, signal=None):
    """Full simulation: ``(TensorDataset, calibrated SignalMatrix)``.

    Passing an already calibrated ``signal`` reuses it unchanged, which is how
    independent test sets share the truth of their training set.
    """
    blocks = simulate_covariates(spec)
    if signal is None:
        y, signal = simulate_responses(blocks, simulate_signal(spec), spec)
    else:
        y, signal = simulate_responses(blocks, signal, spec, calibrate=False)
    return TensorDataset(blocks, y, spec.family), signal


def holdout_spec(spec, n_test, offset=1_000_003):
    return replace(spec, n=n_test, seed=(spec.seed + offset) % 2**64)


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    M: int
    assignment: np.ndarray  # fold ids in 1..M

    def train_indices(self, m):
        return np.flatnonzero(self.assignment != m)

    def test_indices(self, m):
        return np.flatnonzero(self.assignment == m)

    def sizes(self):
        return np.bincount(self.assignment, minlength=self.M + 1)[1:]


def make_folds(n, M, seed=0):
    """Balanced random partition of ``n`` subjects into ``M`` folds."""
    if M < 2:
        raise ValidationError(f"need at least 2 folds, got {M}")
    if M > n:
        raise ValidationError(f"cannot split {n} subjects into {M} folds")
    perm = philox(seed, STREAM_FOLDS).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % M + 1
    return FoldAssignment(M, assignment)


def random_dataset(n, tau, L, family=Family.GAUSSIAN, seed=0, noise=1.0):
    """Small unstructured instance for solver checks (any ``L``, iid covariates).

    The true coefficients are smooth in time so that every penalty has
    something to act on. Returns ``(TensorDataset, B_true)`` with ``B_true``
    of shape ``tau x L``.
    """
    family = Family.parse(family)
    rng = philox(seed, STREAM_COVARIATES, 2**32)
    blocks = rng.standard_normal((L, n, tau))
    t = np.arange(tau) / tau
    B = np.outer(np.cos(2 * np.pi * t), rng.standard_normal(L)) / math.sqrt(tau)
    eta = np.einsum("lnt,tl->n", blocks, B)
    noise_rng = philox(seed, STREAM_NOISE, 2**32)
    if family is Family.GAUSSIAN:
        y = eta + noise * noise_rng.standard_normal(n)
    else:
        y = (noise_rng.random(n) < sigmoid(eta)).astype(float)
    return TensorDataset(blocks, y, family), B
