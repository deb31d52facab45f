import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locagg.admm import AdmmConfig, PenaltyConfig, fit
from locagg.data import SimulationSpec, TensorDataset, holdout_spec, make_folds, random_dataset, simulate
from locagg.errors import ValidationError
from locagg.families import Family
from locagg.local import LocalProblem, solve_local_prox
from locagg.model import FittedModel
from locagg.penalties import chain_graph, grid_graph
from locagg.selection import (
    cv_algorithm_path,
    detection_rates,
    evaluate,
    fit_local_only,
    lambda_max,
    path_overlap,
    predict_coefficients,
    predict_ensemble,
    prediction_error,
    regularization_path,
    select_local_lambda,
)


def test_constant_model_predicts_link_inverse():
    ds, _ = random_dataset(10, 3, 4, "binomial", seed=0)
    B = np.zeros((4, 4))
    B[0] = 0.7
    pred = predict_coefficients(B, "binomial", ds)
    np.testing.assert_allclose(pred.mean, 1 / (1 + np.exp(-0.7)), rtol=1e-15)
    np.testing.assert_array_equal(pred.labels, 1.0)


def test_single_location_ensemble_is_the_local_model():
    ds, _ = random_dataset(12, 4, 1, seed=1)
    B = np.random.default_rng(0).standard_normal((5, 1))
    pred = predict_coefficients(B, "gaussian", ds)
    np.testing.assert_allclose(pred.mean, B[0, 0] + ds.blocks[0] @ B[1:, 0], atol=1e-14)


def test_probability_exactly_half_predicts_one():
    # three locations with intercept-only probabilities 0.9, 0.2, 0.4
    ds = TensorDataset(np.zeros((3, 1, 1)), np.array([0.0]), "binomial")
    logit = lambda p: np.log(p / (1 - p))
    B = np.array([[logit(0.9), logit(0.2), logit(0.4)], [0.0, 0.0, 0.0]])
    pred = predict_coefficients(B, "binomial", ds)
    assert pred.mean[0] == pytest.approx(0.5, abs=1e-15)
    # the mean is 0.5 up to rounding; pin it exactly and check the rule itself
    pred_exact = predict_coefficients(np.zeros((2, 3)), "binomial", ds)
    assert pred_exact.mean[0] == 0.5 and pred_exact.labels[0] == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gaussian_ensemble_is_linear(seed):
    ds, _ = random_dataset(15, 5, 3, seed=seed % 1000)
    rng = np.random.default_rng(seed)
    B1, B2 = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
    mid = predict_coefficients((B1 + B2) / 2, "gaussian", ds).mean
    avg = (predict_coefficients(B1, "gaussian", ds).mean
           + predict_coefficients(B2, "gaussian", ds).mean) / 2
    assert np.max(np.abs(mid - avg)) <= 1e-12


def test_prediction_dimension_checks():
    ds, _ = random_dataset(10, 3, 4, seed=0)
    with pytest.raises(ValidationError, match="tau x L"):
        predict_coefficients(np.zeros((4, 3)), "gaussian", ds)
    with pytest.raises(ValidationError, match="families"):
        predict_coefficients(np.zeros((4, 4)), "binomial", ds)


def test_error_metrics():
    ds, _ = random_dataset(10, 3, 2, seed=0)
    model = FittedModel(np.zeros((4, 2)), "gaussian")
    perfect = ds.with_responses(predict_ensemble(model, ds).mean)
    assert evaluate(model, perfect).prediction_error == 0.0
    with pytest.raises(ValidationError):
        prediction_error("gaussian", ds.y, predict_ensemble(model, ds), score="auc")


def test_detection_definitions():
    truth = np.zeros((3, 4))
    truth[:, :2] = 1.0
    ds, _ = random_dataset(10, 3, 4, seed=0)
    exact = FittedModel(np.vstack([np.zeros(4), truth]), "gaussian")
    rep = evaluate(exact, ds, truth)
    assert (rep.coef_error, rep.tpr, rep.fpr) == (0.0, 1.0, 0.0)
    zero = FittedModel(np.zeros((4, 4)), "gaussian")
    rep = evaluate(zero, ds, truth)
    assert (rep.tpr, rep.fpr, rep.detected) == (0.0, 0.0, 0)
    assert detection_rates(np.ones((3, 4)), np.zeros(4, bool)) == (1.0, 1.0, 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_ranges(seed):
    rng = np.random.default_rng(seed)
    slopes = rng.standard_normal((3, 6)) * (rng.random(6) < 0.5)
    tpr, fpr, _ = detection_rates(slopes, rng.random(6) < 0.5)
    assert 0 <= tpr <= 1 and 0 <= fpr <= 1
    y = (rng.random(20) < 0.5).astype(float)
    ds = TensorDataset(rng.standard_normal((6, 20, 3)), y, "binomial")
    err = prediction_error("binomial", y, predict_coefficients(
        rng.standard_normal((4, 6)), "binomial", ds))
    assert 0 <= err <= 1


def test_lambda_max_needs_edges():
    ds, _ = random_dataset(10, 3, 3, seed=0)
    assert lambda_max(ds, chain_graph(3)) > 0
    from locagg.penalties import GraphPenalty
    with pytest.raises(ValidationError, match="edge"):
        lambda_max(ds, GraphPenalty(np.zeros((3, 3))))


@pytest.fixture(scope="module")
def cv_result():
    ds, _ = random_dataset(60, 6, 4, seed=11)
    folds = make_folds(ds.n, 3, seed=5)
    res = cv_algorithm_path(ds, chain_graph(4), PenaltyConfig(0.0, 0.2, 0.0),
                            AdmmConfig(max_iters=300), folds)
    return ds, folds, res


def test_cv_selects_the_minimum(cv_result):
    _, folds, res = cv_result
    assert np.all(np.isfinite(res.cv_curve))
    assert res.cv_curve[res.k_opt - 1] == res.cv_curve.min()
    assert len(res.cv_curve) == min(len(c) for c in res.fold_curves)
    assert len(res.per_fold_paths) == folds.M


def test_cv_final_model_is_full_data_iterate(cv_result):
    ds, _, res = cv_result
    pen = PenaltyConfig(res.lambda_agg, 0.2, 0.0)
    _, path = fit(ds, chain_graph(4), pen, AdmmConfig(max_iters=300, record_path=True,
                                                       min_iters=res.k_opt))
    np.testing.assert_array_equal(res.final_model.B, path.snapshot(res.k_opt))
    assert res.final_model.iterate == res.k_opt


def test_held_out_subjects_do_not_touch_fold_fit():
    ds, _ = random_dataset(40, 5, 3, seed=12)
    folds = make_folds(ds.n, 4, seed=1)
    held = folds.test_indices(2)
    y2 = ds.y.copy()
    y2[held] += 100.0
    cfg = AdmmConfig(max_iters=50, record_path=True)
    pen = PenaltyConfig(5.0, 0.1, 0.0)
    tr = folds.train_indices(2)
    _, a = fit(ds.subset(tr), chain_graph(3), pen, cfg)
    _, b = fit(ds.with_responses(y2).subset(tr), chain_graph(3), pen, cfg)
    for Ba, Bb in zip(a.iterates, b.iterates):
        np.testing.assert_array_equal(Ba, Bb)


def test_noise_only_responses_stay_at_noise_floor():
    rng = np.random.default_rng(21)
    L, tau = 4, 5
    train = TensorDataset(rng.standard_normal((L, 100, tau)), rng.standard_normal(100))
    test = TensorDataset(rng.standard_normal((L, 4000, tau)), rng.standard_normal(4000))
    res = cv_algorithm_path(train, chain_graph(L), PenaltyConfig(0.0, 0.1, 0.0),
                            AdmmConfig(max_iters=500), make_folds(100, 5, seed=2))
    mse = evaluate(res.final_model, test).prediction_error
    assert mse <= 1.1 * np.var(test.y)


def test_cv_beats_both_path_endpoints_in_most_seeds():
    wins = 0
    seeds = range(5)
    for seed in seeds:
        spec = SimulationSpec(n=60, tau=10, L=9, spatial="smooth", snr=5.0, seed=seed)
        train, signal = simulate(spec)
        test, _ = simulate(holdout_spec(spec, 1000), signal)
        graph = grid_graph(3)
        res = cv_algorithm_path(train, graph, PenaltyConfig(0.0, 0.1, 0.0),
                                AdmmConfig(max_iters=500), make_folds(train.n, 5, seed=seed))
        _, path = fit(train, graph, PenaltyConfig(res.lambda_agg, 0.1, 0.0),
                      AdmmConfig(max_iters=500, record_path=True))
        errs = [prediction_error("gaussian", test.y, predict_coefficients(B, "gaussian", test))
                for B in (res.final_model.B, path.iterates[0], path.iterates[-1])]
        wins += errs[0] <= min(errs[1:])
    assert wins > len(seeds) / 2


def test_grid_of_one_point():
    ds, _ = random_dataset(30, 4, 3, seed=2)
    ch = select_local_lambda(ds, [(0.3, 0.7)], make_folds(30, 3))
    np.testing.assert_array_equal(ch.lambda_sm, 0.3)
    np.testing.assert_array_equal(ch.lambda_sp, 0.7)


def test_identical_locations_get_identical_choices():
    ds, _ = random_dataset(30, 4, 2, seed=3)
    blocks = np.stack([ds.blocks[0], ds.blocks[0]])
    twin = TensorDataset(blocks, ds.y)
    grid = [(a, b) for a in (0.0, 1.0) for b in (0.0, 0.5, 5.0)]
    ch = select_local_lambda(twin, grid, make_folds(30, 3, seed=4))
    assert ch.lambda_sm[0] == ch.lambda_sm[1] and ch.lambda_sp[0] == ch.lambda_sp[1]
    np.testing.assert_array_equal(ch.scores[0], ch.scores[1])


def test_noise_location_prefers_full_shrinkage():
    grid = [(0.0, 0.0), (0.0, 1.0), (0.0, 10.0), (0.0, 1e3)]
    picks = 0
    seeds = range(7)
    for seed in seeds:
        rng = np.random.default_rng(seed)
        blocks = rng.standard_normal((3, 80, 6))
        y = blocks[1] @ np.full(6, 0.8) + blocks[2] @ np.linspace(-1, 1, 6) + rng.standard_normal(80)
        ch = select_local_lambda(TensorDataset(blocks, y), grid, make_folds(80, 5, seed=seed))
        picks += ch.lambda_sp[0] == 1e3
    assert picks > len(seeds) / 2


def test_local_lambda_grid_validation():
    ds, _ = random_dataset(20, 3, 2, seed=0)
    with pytest.raises(ValidationError):
        select_local_lambda(ds, [], make_folds(20, 2))
    with pytest.raises(ValidationError):
        select_local_lambda(ds, [(-1.0, 0.0)], make_folds(20, 2))


def test_local_only_baseline_has_no_proximity_term():
    ds, _ = random_dataset(40, 5, 3, "binomial", seed=6)
    model = fit_local_only(ds, 0.2, 0.5)
    for l in range(ds.L):
        prob = LocalProblem.standalone(ds.blocks[l], ds.y, "binomial", lambda_sm=0.2,
                                       lambda_sp=0.5)
        np.testing.assert_allclose(model.B[:, l], solve_local_prox(prob), atol=1e-12)
    assert model.lambda_agg == 0.0 and model.family is Family.BINOMIAL


def test_path_overlap_rows():
    ds, _ = random_dataset(30, 4, 3, seed=7)
    lambdas = [0.1, 1.0, 10.0]
    pen = PenaltyConfig(10.0, 0.1, 0.0)
    reg = regularization_path(ds, chain_graph(3), pen, lambdas)
    _, path = fit(ds, chain_graph(3), pen, AdmmConfig(record_path=True))
    rows = path_overlap(path.iterates, reg, lambdas)
    assert len(rows) == len(path.iterates)
    assert [r[0] for r in rows] == list(range(1, len(rows) + 1))
    assert all(r[1] in lambdas and r[2] >= 0 for r in rows)
    # the converged end of the path sits on the lambda = 10 solution
    assert rows[-1][1] == 10.0
