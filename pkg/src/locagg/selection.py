"""Algorithm-path cross-validation, local penalty selection and evaluation."""

import math
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmConfig, fit
from .errors import SolverError, ValidationError
from .families import Family, deviance, inverse_link
from .local import LocalSolver, with_intercept
from .model import FittedModel
from .parallel import parallel_map
from .penalties import pad_intercept, second_difference_penalty


@dataclass
class Predictions:
    mean: np.ndarray
    labels: np.ndarray = None

    @property
    def values(self):
        return self.mean if self.labels is None else self.labels


def _check_model_data(B, family, dataset):
    if B.shape != (dataset.tau + 1, dataset.L):
        raise ValidationError(
            f"model is {B.shape[0] - 1} x {B.shape[1]} (tau x L) but data is "
            f"{dataset.tau} x {dataset.L}"
        )
    if Family.parse(family) is not dataset.family:
        raise ValidationError("model and dataset families differ")


def local_linear_predictors(B, dataset):
    """``n x L`` matrix of ``alpha_l + X_l beta_l``."""
    return np.einsum("lnt,tl->nl", dataset.blocks, B[1:]) + B[0][None, :]


def predict_coefficients(B, family, dataset):
    """Ensemble prediction: average of the local inverse-link outputs.

    Binomial labels threshold the averaged probability at 0.5, ties going to 1.
    """
    B = np.asarray(B, dtype=float)
    _check_model_data(B, family, dataset)
    family = Family.parse(family)
    mean = inverse_link(family, local_linear_predictors(B, dataset)).mean(axis=1)
    if family is Family.BINOMIAL:
        return Predictions(mean, (mean >= 0.5).astype(float))
    return Predictions(mean)


def predict_ensemble(model, dataset):
    return predict_coefficients(model.B, model.family, dataset)


def prediction_error(family, y, pred, score="default"):
    """MSE (gaussian), misclassification (binomial) or mean deviance (``score='deviance'``)."""
    family = Family.parse(family)
    if score == "deviance":
        if family is Family.GAUSSIAN:
            return float(np.mean((y - pred.mean) ** 2))
        p = np.clip(pred.mean, 1e-15, 1 - 1e-15)
        return float(-2.0 * np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))
    if score != "default":
        raise ValidationError(f"unknown score {score!r}")
    if family is Family.GAUSSIAN:
        return float(np.mean((y - pred.mean) ** 2))
    return float(np.mean(pred.labels != y))


def lambda_max(dataset, graph):
    """Aggregation weight large enough to dominate the data term by about 100x."""
    conn = graph.algebraic_connectivity()
    if conn is None:
        raise ValidationError("lambda_max needs a graph with at least one edge")
    total = 0.0
    for l in range(dataset.L):
        total += float(np.linalg.norm(with_intercept(dataset.blocks[l]).T @ dataset.y))
    return 100.0 * total / (dataset.n * conn * dataset.L)


@dataclass
class PathCvResult:
    cv_curve: np.ndarray
    k_opt: int
    fold_curves: list
    per_fold_paths: list
    final_model: FittedModel
    lambda_agg: float
    full_path_length: int = 0


def _score_path(path, family, test, score):
    return np.array([
        prediction_error(family, test.y, predict_coefficients(B, family, test), score)
        for B in path.iterates
    ])


def cv_algorithm_path(dataset, graph, penalty, config, folds, lambda_agg=None, score="default",
                      threads=None, backend=None):
    """Choose the ADMM iterate with the lowest M-fold CV error at a large ``lambda_agg``.

    ``lambda_agg`` defaults to :func:`lambda_max`. Fold curves are truncated
    to the shortest fold path before averaging; the returned model is
    iterate ``k_opt`` of a full-data run forced to last at least that long.
    """
    if lambda_agg is None:
        lambda_agg = lambda_max(dataset, graph)
    penalty = penalty.with_lambda_agg(lambda_agg)
    fold_config = config.replace(record_path=True, min_iters=0)

    def run_fold(m):
        train = dataset.subset(folds.train_indices(m))
        test = dataset.subset(folds.test_indices(m))
        _, path = fit(train, graph, penalty, fold_config, backend=backend, threads=1)
        if len(path.iterates) == 0:
            raise SolverError(f"fold {m} produced no iterates")
        return path, _score_path(path, dataset.family, test, score)

    results = parallel_map(run_fold, range(1, folds.M + 1), threads)
    paths = [p for p, _ in results]
    curves = [c for _, c in results]
    K = min(len(c) for c in curves)
    cv_curve = np.mean(np.stack([c[:K] for c in curves]), axis=0)
    k_opt = int(np.argmin(cv_curve)) + 1
    full_config = config.replace(record_path=True, min_iters=k_opt,
                                 max_iters=max(config.max_iters, k_opt))
    state, path = fit(dataset, graph, penalty, full_config, backend=backend, threads=threads)
    lam_sm, lam_sp = penalty.local_weights(dataset.L)
    final = FittedModel(path.snapshot(k_opt).copy(), dataset.family, lambda_agg, lam_sm, lam_sp,
                        bool(state.converged), k_opt)
    return PathCvResult(cv_curve, k_opt, curves, paths, final, lambda_agg, len(path))


@dataclass
class LocalLambdaChoice:
    lambda_sm: np.ndarray
    lambda_sp: np.ndarray
    scores: np.ndarray  # L x grid size, mean held-out deviance
    grid: list = field(default_factory=list)


def _fit_standalone(X, y, family, lam_sm, lam_sp, omega_t, controls=None):
    solver = LocalSolver(X, y, family, lam_sm, lam_sp, omega_t, controls)
    p = solver.Xt.shape[1]
    zero = np.zeros(p)
    return solver.solve(zero, zero, zero)


def _local_omega(tau):
    if tau >= 3:
        return pad_intercept(second_difference_penalty(tau))
    return np.zeros((tau + 1, tau + 1))


def select_local_lambda(dataset, grid, folds, threads=None, controls=None):
    """Per-location M-fold CV over ``(lambda_sm, lambda_sp)`` pairs with rho = 0.

    Scores are mean held-out deviance. Near-ties (relative 1e-9) go to the
    larger ``lambda_sp``, then the larger ``lambda_sm``.
    """
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ValidationError("lambda grid is empty")
    if any(a < 0 or b < 0 for a, b in grid):
        raise ValidationError("grid values must be nonnegative")
    omega_t = _local_omega(dataset.tau)
    splits = [(folds.train_indices(m), folds.test_indices(m)) for m in range(1, folds.M + 1)]

    def location(l):
        X = dataset.blocks[l]
        scores = np.zeros(len(grid))
        for g, (lam_sm, lam_sp) in enumerate(grid):
            total = 0.0
            for tr, te in splits:
                b = _fit_standalone(X[tr], dataset.y[tr], dataset.family, lam_sm, lam_sp, omega_t,
                                    controls)
                eta = with_intercept(X[te]) @ b
                total += deviance(dataset.family, dataset.y[te], eta) / te.size
            scores[g] = total / len(splits)
        best = float(scores.min())
        tol = 1e-9 * max(abs(best), 1e-300)
        ties = [g for g in range(len(grid)) if scores[g] <= best + tol]
        pick = max(ties, key=lambda g: (grid[g][1], grid[g][0]))
        return grid[pick], scores

    out = parallel_map(location, range(dataset.L), threads)
    lam_sm = np.array([c[0][0] for c in out])
    lam_sp = np.array([c[0][1] for c in out])
    return LocalLambdaChoice(lam_sm, lam_sp, np.stack([c[1] for c in out]), grid)


def fit_local_only(dataset, lambda_sm=0.0, lambda_sp=0.0, threads=None, controls=None):
    """Baseline without aggregation: independent local GLMs, no proximity term."""
    L = dataset.L
    lam_sm = np.broadcast_to(np.asarray(lambda_sm, dtype=float), (L,))
    lam_sp = np.broadcast_to(np.asarray(lambda_sp, dtype=float), (L,))
    omega_t = _local_omega(dataset.tau)
    cols = parallel_map(
        lambda l: _fit_standalone(dataset.blocks[l], dataset.y, dataset.family, lam_sm[l],
                                  lam_sp[l], omega_t, controls),
        range(L), threads,
    )
    return FittedModel(np.column_stack(cols), dataset.family, 0.0, lam_sm, lam_sp, True, 0)


@dataclass
class EvalReport:
    n: int
    family: Family
    prediction_error: float
    coef_error: float = math.nan
    tpr: float = math.nan
    fpr: float = math.nan
    detected: int = 0

    def as_dict(self):
        return {
            "n": self.n,
            "family": self.family.name.lower(),
            "prediction_error": self.prediction_error,
            "coef_error": self.coef_error,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "detected": self.detected,
        }


def detection_rates(B_hat_slopes, truth_support):
    """TPR/FPR of location detection; a location is detected when its slopes are not all zero."""
    detected = np.linalg.norm(B_hat_slopes, axis=0) > 0
    truth = np.asarray(truth_support, dtype=bool)
    pos, neg = truth.sum(), (~truth).sum()
    tpr = float((detected & truth).sum() / pos) if pos else 1.0
    fpr = float((detected & ~truth).sum() / neg) if neg else 0.0
    return tpr, fpr, int(detected.sum())


def evaluate(model, dataset, truth=None, score="default"):
    pred = predict_ensemble(model, dataset)
    report = EvalReport(dataset.n, dataset.family,
                        prediction_error(dataset.family, dataset.y, pred, score))
    if truth is not None:
        B_true = truth.B if hasattr(truth, "B") else np.asarray(truth, dtype=float)
        if B_true.shape != model.slopes.shape:
            raise ValidationError(f"truth is {B_true.shape}, model slopes are {model.slopes.shape}")
        report.coef_error = float(np.linalg.norm(model.slopes - B_true))
        support = np.linalg.norm(B_true, axis=0) > 0
        report.tpr, report.fpr, report.detected = detection_rates(model.slopes, support)
    return report


def regularization_path(dataset, graph, penalty, lambdas, config=None, threads=None):
    """Converged fits over a grid of ``lambda_agg`` values, one ``(tau+1) x L`` matrix each."""
    config = (config or AdmmConfig()).replace(record_path=False)
    out = []
    for lam in lambdas:
        state, _ = fit(dataset, graph, penalty.with_lambda_agg(float(lam)), config, threads=threads)
        out.append(state.B.copy())
    return out


def path_overlap(iterates, reg_path, lambdas):
    """For each algorithm iterate, the closest regularization-path solution.

    Rows are ``(k, nearest_lambda, distance, relative_distance)``; purely
    descriptive, nothing is asserted about the match.
    """
    rows = []
    for k, B in enumerate(iterates, start=1):
        d = [float(np.linalg.norm(B - R)) for R in reg_path]
        j = int(np.argmin(d))
        rows.append((k, float(lambdas[j]), d[j], d[j] / max(float(np.linalg.norm(B)), 1e-300)))
    return rows
