"""Fitted-model container shared by fitting, prediction and serialization."""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .families import Family


@dataclass(eq=False)
class FittedModel:
    """Coefficients ``B`` ((tau+1) x L, intercepts in row 0) and fit metadata.

    ``iterate`` is the ADMM iteration the coefficients come from; ``path``
    optionally holds every recorded iterate as an ``(K, tau+1, L)`` array.
    """

    B: np.ndarray
    family: Family
    lambda_agg: float = 0.0
    lambda_sm: np.ndarray = None
    lambda_sp: np.ndarray = None
    converged: bool = True
    iterate: int = 0
    path: np.ndarray = None

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        if self.B.ndim != 2 or self.B.shape[0] < 2:
            raise ValidationError(f"coefficient matrix must be (tau+1) x L, got {self.B.shape}")
        self.family = Family.parse(self.family)
        L = self.B.shape[1]
        self.lambda_sm = np.broadcast_to(np.asarray(
            0.0 if self.lambda_sm is None else self.lambda_sm, dtype=float), (L,)).copy()
        self.lambda_sp = np.broadcast_to(np.asarray(
            0.0 if self.lambda_sp is None else self.lambda_sp, dtype=float), (L,)).copy()
        if self.path is not None:
            self.path = np.asarray(self.path, dtype=float)
            if self.path.ndim != 3 or self.path.shape[1:] != self.B.shape:
                raise ValidationError("path snapshots must match the coefficient shape")

    @property
    def tau(self):
        return self.B.shape[0] - 1

    @property
    def L(self):
        return self.B.shape[1]

    @property
    def intercepts(self):
        return self.B[0]

    @property
    def slopes(self):
        return self.B[1:]

    @classmethod
    def from_fit(cls, state, path, dataset, penalty):
        lam_sm, lam_sp = penalty.local_weights(dataset.L)
        stacked = np.stack(path.iterates) if path is not None and path.iterates else None
        return cls(state.B.copy(), dataset.family, penalty.lambda_agg, lam_sm, lam_sp,
                   bool(state.converged), state.k, stacked)
