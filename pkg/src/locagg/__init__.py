"""Local-Aggregate generalized linear models for tensor covariates.

Per-location penalized GLMs are coupled through a graph-Laplacian
aggregating penalty and fit by ADMM, in-process or across TCP workers.
"""

__version__ = "0.1.0"

from .admm import Adapt, AdmmConfig, AlgorithmPath, CoefficientState, PenaltyConfig, fit
from .data import SimulationSpec, TensorDataset, make_folds, simulate
from .errors import LocaggError, SolverError, ValidationError
from .families import Family
from .local import LocalProblem, SolverControls, solve_local_prox
from .model import FittedModel
from .oracle import gaussian_oracle
from .penalties import GraphPenalty, chain_graph, grid_graph, laplacian_from_coords
from .selection import cv_algorithm_path, evaluate, fit_local_only, lambda_max, predict_ensemble

__all__ = [
    "Adapt",
    "AdmmConfig",
    "AlgorithmPath",
    "CoefficientState",
    "FittedModel",
    "Family",
    "GraphPenalty",
    "LocalProblem",
    "LocaggError",
    "PenaltyConfig",
    "SimulationSpec",
    "SolverControls",
    "SolverError",
    "TensorDataset",
    "ValidationError",
    "chain_graph",
    "cv_algorithm_path",
    "evaluate",
    "fit",
    "fit_local_only",
    "gaussian_oracle",
    "grid_graph",
    "lambda_max",
    "laplacian_from_coords",
    "make_folds",
    "predict_ensemble",
    "simulate",
    "solve_local_prox",
]
