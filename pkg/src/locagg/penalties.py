"""Temporal roughness, spatial graph Laplacians and the group-lasso prox."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ValidationError


def second_difference_matrix(tau):
    """The ``(tau-2) x tau`` second-order difference operator (no wraparound)."""
    if tau < 3:
        raise ValidationError(f"tau must be >= 3 for a second-difference penalty, got {tau}")
    D = np.zeros((tau - 2, tau))
    idx = np.arange(tau - 2)
    D[idx, idx] = 1.0
    D[idx, idx + 1] = -2.0
    D[idx, idx + 2] = 1.0
    return D


def second_difference_penalty(tau):
    """Roughness matrix ``Omega = D2^T D2``; annihilates affine trends."""
    D = second_difference_matrix(tau)
    return D.T @ D


def intercept_selector(tau):
    """``S``: identity on the slope block, zero on the leading intercept slot."""
    S = np.eye(tau + 1)
    S[0, 0] = 0.0
    return S


def pad_intercept(omega):
    """Embed a ``tau x tau`` penalty into ``(tau+1) x (tau+1)`` with a zero first row/column."""
    tau = omega.shape[0]
    out = np.zeros((tau + 1, tau + 1))
    out[1:, 1:] = omega
    return out


@dataclass(frozen=True, eq=False)
class GraphPenalty:
    """Spatial weights ``W`` and Laplacian ``G = deg(W) - W`` over ``L`` locations.

    The eigendecomposition of ``G`` is computed on first use and cached;
    instances are immutable so the cache never goes stale.
    """

    W: np.ndarray
    G: np.ndarray = field(init=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValidationError(f"weight matrix must be square, got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise ValidationError("weight matrix contains non-finite entries")
        if np.any(W < 0):
            raise ValidationError("weights must be nonnegative")
        if not np.array_equal(W, W.T):
            raise ValidationError("weight matrix must be symmetric")
        if np.any(np.diag(W) != 0):
            raise ValidationError("weight matrix must have a zero diagonal (no self-loops)")
        W.setflags(write=False)
        G = np.diag(W.sum(axis=1)) - W
        G.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "G", G)

    @property
    def n_locations(self):
        return self.W.shape[0]

    @cached_property
    def _eigh(self):
        lam, Q = np.linalg.eigh(self.G)
        # G is PSD; clip rounding noise below zero
        lam = np.where(lam < 0, 0.0, lam)
        lam.setflags(write=False)
        Q.setflags(write=False)
        return lam, Q

    @property
    def eigenvalues(self):
        return self._eigh[0]

    @property
    def eigenvectors(self):
        return self._eigh[1]

    @property
    def is_empty(self):
        return not np.any(self.W)

    def algebraic_connectivity(self):
        """Smallest nonzero Laplacian eigenvalue (``None`` for an edgeless graph)."""
        lam = self.eigenvalues
        if lam.size == 0 or lam[-1] <= 0:
            return None
        nonzero = lam[lam > 1e-10 * lam[-1]]
        return float(nonzero[0])


def laplacian_from_adjacency(neighbors, n_locations=None):
    """Binary-weight graph from adjacency lists.

    ``neighbors`` maps (or indexes) each location to an iterable of its
    neighbours. The relation must be symmetric and free of self-loops.
    """
    if isinstance(neighbors, dict):
        items = neighbors.items()
        L = n_locations if n_locations is not None else (max(neighbors, default=-1) + 1)
    else:
        items = enumerate(neighbors)
        L = n_locations if n_locations is not None else len(neighbors)
    W = np.zeros((L, L))
    for l, nbrs in items:
        for m in nbrs:
            if not (0 <= l < L and 0 <= m < L):
                raise ValidationError(f"edge ({l}, {m}) outside 0..{L - 1}")
            if l == m:
                raise ValidationError(f"self-loop at location {l}")
            W[l, m] = 1.0
    asym = np.argwhere(W != W.T)
    if asym.size:
        l, m = asym[0]
        raise ValidationError(f"adjacency is not symmetric: {l} -> {m} has no reverse edge")
    return GraphPenalty(W)


def chain_graph(L):
    return laplacian_from_adjacency([[m for m in (l - 1, l + 1) if 0 <= m < L] for l in range(L)])


def grid_graph(side):
    """4-neighbourhood graph on a ``side x side`` grid, row-major location order."""
    nbrs = []
    for i in range(side):
        for j in range(side):
            cell = []
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                a, b = i + di, j + dj
                if 0 <= a < side and 0 <= b < side:
                    cell.append(a * side + b)
            nbrs.append(cell)
    return laplacian_from_adjacency(nbrs)


def great_circle_distances(angles):
    """Pairwise great-circle distances on the unit sphere from (azimuth, elevation) in radians."""
    az, el = angles[:, 0], angles[:, 1]
    xyz = np.column_stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    return _sphere_distances(xyz)


def _sphere_distances(xyz):
    xyz = xyz / np.linalg.norm(xyz, axis=1, keepdims=True)
    cross = np.linalg.norm(np.cross(xyz[:, None, :], xyz[None, :, :]), axis=-1)
    dot = xyz @ xyz.T
    # atan2 form stays accurate for nearly coincident and antipodal points
    return np.arctan2(cross, dot)


def euclidean_distances(coords):
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def laplacian_from_coords(coords, theta, metric="euclidean"):
    """Exponential-kernel graph ``w = exp(-D^2 / theta)`` off the diagonal.

    ``metric='polar'`` takes rows of (azimuth, elevation) in radians, or
    3-D points which are projected onto the unit sphere.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2:
        raise ValidationError("coords must be a 2-D array, one row per location")
    if not theta > 0:
        raise ValidationError(f"theta must be positive, got {theta}")
    if metric == "euclidean":
        D = euclidean_distances(coords)
    elif metric == "polar":
        if coords.shape[1] == 2:
            D = great_circle_distances(coords)
        elif coords.shape[1] == 3:
            D = _sphere_distances(coords)
        else:
            raise ValidationError("polar metric needs (azimuth, elevation) or (x, y, z) rows")
    else:
        raise ValidationError(f"unknown metric {metric!r}")
    L = coords.shape[0]
    off = ~np.eye(L, dtype=bool)
    if np.any(D[off] == 0):
        l, m = np.argwhere((D == 0) & off)[0]
        raise ValidationError(f"locations {l} and {m} have identical coordinates")
    W = np.exp(-(D * D) / theta)
    np.fill_diagonal(W, 0.0)
    W = 0.5 * (W + W.T)
    return GraphPenalty(W)


def aggregating_penalty_value(B, G):
    """``tr(B G B^T)`` for a coefficient matrix with one column per location."""
    B = np.asarray(B, dtype=float)
    G = G.G if isinstance(G, GraphPenalty) else np.asarray(G, dtype=float)
    if B.shape[1] != G.shape[0]:
        raise ValidationError(f"B has {B.shape[1]} columns but G is {G.shape}")
    return float(np.sum((B @ G) * B))


def pairwise_penalty_value(B, W):
    """Unordered-pair sum of ``w_ll' ||b_l - b_l'||^2``; equals ``tr(B G B^T)``."""
    B = np.asarray(B, dtype=float)
    W = W.W if isinstance(W, GraphPenalty) else np.asarray(W, dtype=float)
    total = 0.0
    L = W.shape[0]
    for l in range(L):
        for m in range(l + 1, L):
            if W[l, m]:
                d = B[:, l] - B[:, m]
                total += W[l, m] * float(d @ d)
    return total


def prox_group_lasso(x, t, skip_intercept=False):
    """Block soft-thresholding ``max(0, 1 - t/||x||) x``.

    With ``skip_intercept`` the first coordinate is excluded from the norm
    and passed through unchanged.
    """
    if t < 0:
        raise ValidationError(f"threshold must be nonnegative, got {t}")
    x = np.asarray(x, dtype=float)
    out = x.copy()
    block = out[1:] if skip_intercept else out
    norm = float(np.sqrt(block @ block))
    if norm <= t:
        block[:] = 0.0
    else:
        block *= 1.0 - t / norm
    return out
