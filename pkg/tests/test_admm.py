import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locagg import oracle
from locagg.admm import (
    AdmmConfig,
    ConsensusEngine,
    PenaltyConfig,
    adapt_rho,
    dual_update,
    fit,
    residuals,
    tolerances,
    z_update_scalar,
    z_update_vector,
)
from locagg.data import random_dataset
from locagg.errors import NonFiniteError, ValidationError
from locagg.local import LocalProblem, solve_local_gaussian_direct
from locagg.penalties import GraphPenalty, chain_graph, grid_graph
from locagg.selection import fit_local_only

from conftest import TIGHT

PAIR = GraphPenalty(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_z_update_without_aggregation_is_identity():
    rng = np.random.default_rng(0)
    B, U = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
    U[0] = 0
    Z = z_update_vector(B, U, chain_graph(4), 0.0, np.ones(5))
    expected = B + U
    expected[0] = 0
    np.testing.assert_array_equal(Z, expected)


def test_z_update_two_node_example():
    B = np.array([[7.0, -3.0], [1.0, 0.0]])
    Z = z_update_scalar(B, np.zeros((2, 2)), PAIR, 1.0, 1.0)
    np.testing.assert_allclose(Z, [[0.0, 0.0], [0.6, 0.4]], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(2, 8),
       st.floats(0.0, 50.0))
def test_vector_z_update_solves_sylvester_equation(seed, tau, L, lam):
    rng = np.random.default_rng(seed)
    W = np.triu(rng.random((L, L)) * (rng.random((L, L)) < 0.6), 1)
    graph = GraphPenalty(W + W.T)
    p = tau + 1
    B, U = rng.standard_normal((p, L)), rng.standard_normal((p, L))
    U[0] = 0
    rho = np.exp(rng.uniform(-3, 3, p))
    Z = z_update_vector(B, U, graph, lam, rho)
    V = B + U
    V[0] = 0
    resid = rho[:, None] * Z + 2 * lam * Z @ graph.G - rho[:, None] * V
    assert np.linalg.norm(resid) <= 1e-10
    assert np.max(np.abs(Z - oracle.sylvester_dense(V, graph.G, lam, rho))) <= 1e-10


def test_constant_vector_rho_matches_scalar():
    rng = np.random.default_rng(1)
    B, U = rng.standard_normal((4, 9)), rng.standard_normal((4, 9))
    g = grid_graph(3)
    np.testing.assert_allclose(z_update_vector(B, U, g, 2.5, np.full(4, 0.7)),
                               z_update_scalar(B, U, g, 2.5, 0.7), atol=1e-14)


def test_nonpositive_rho_rejected():
    B = np.zeros((2, 2))
    with pytest.raises(ValidationError):
        z_update_vector(B, B, PAIR, 1.0, np.array([1.0, 0.0]))
    with pytest.raises(ValidationError):
        z_update_scalar(B, B, PAIR, 1.0, -1.0)


def test_dual_update_arithmetic():
    U = np.array([[0.0], [0.1]])
    B = np.array([[9.0], [0.5]])
    Z = np.array([[0.0], [0.2]])
    np.testing.assert_allclose(dual_update(U, B, Z), [[0.0], [0.4]], atol=1e-15)


def test_residual_hand_case():
    B = np.array([[5.0, 5.0], [3.0, 0.0], [0.0, 4.0]])
    Z = np.zeros((3, 2))
    r_norm, s_norm, r_t, s_t = residuals(B, Z, Z, np.ones(3))
    assert r_norm == 5.0 and s_norm == 0.0
    np.testing.assert_array_equal(r_t, [0.0, 3.0, 4.0])
    Zp = np.ones((3, 2))
    _, s_norm, _, s_t = residuals(np.zeros((3, 2)), Z, Zp, np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(s_t, [np.sqrt(2), 2 * np.sqrt(2), 3 * np.sqrt(2)])


def test_tolerances_formula():
    B = np.array([[1.0], [3.0], [4.0]])
    Z = np.zeros((3, 1))
    U = np.array([[0.0], [1.0], [0.0]])
    eps_pr, eps_dual = tolerances(B, Z, U, np.full(3, 2.0), 1e-3, 1e-2)
    assert eps_pr == pytest.approx(np.sqrt(3) * 1e-3 + 1e-2 * 5.0)
    assert eps_dual == pytest.approx(np.sqrt(3) * 1e-3 + 1e-2 * 2.0)


def test_adapt_rho_rules():
    rho = np.array([1.0, 1.0, 1.0])
    r_t, s_t = np.array([100.0, 1.0, 1.0]), np.array([1.0, 100.0, 1.0])
    vec = AdmmConfig(adapt="vector")
    np.testing.assert_array_equal(adapt_rho(rho, 0, 0, r_t, s_t, vec), [2.0, 0.5, 1.0])
    sc = AdmmConfig(adapt="scalar")
    np.testing.assert_array_equal(adapt_rho(rho, 100.0, 1.0, r_t, s_t, sc), [2.0] * 3)
    np.testing.assert_array_equal(adapt_rho(rho, 1.0, 100.0, r_t, s_t, sc), [0.5] * 3)
    np.testing.assert_array_equal(adapt_rho(rho, 5.0, 1.0, r_t, s_t, sc), rho)
    fx = AdmmConfig(adapt="fixed")
    np.testing.assert_array_equal(adapt_rho(rho, 100.0, 1.0, r_t, s_t, fx), rho)


def test_rho_change_rescales_dual():
    cfg = AdmmConfig(adapt="vector", eps_abs=1e-12, eps_rel=1e-12)
    engine = ConsensusEngine(PAIR, 1, 0.0, cfg)
    B = np.array([[0.0, 0.0], [1.0, -1.0]])
    engine.state.Z = np.zeros((2, 2))
    out = engine.step(B, B.copy())
    # lambda_agg = 0 puts Z = V, so r = 0 and s is large: rho halves on row 1
    assert engine.state.rho[1] == 0.5
    assert out.rescale[1] == 2.0
    np.testing.assert_array_equal(engine.state.U, 0.0)


def test_engine_rejects_non_finite_coefficients():
    engine = ConsensusEngine(PAIR, 1, 1.0, AdmmConfig())
    B = np.array([[0.0, np.nan], [1.0, 1.0]])
    with pytest.raises(NonFiniteError):
        engine.step(B, B)


def test_config_validation():
    with pytest.raises(ValidationError):
        AdmmConfig(rho_init=0)
    with pytest.raises(ValidationError):
        AdmmConfig(mu=1.0)
    with pytest.raises(ValueError):
        AdmmConfig(adapt="sometimes")
    with pytest.raises(ValidationError):
        AdmmConfig(eps_abs=0, eps_rel=0)
    with pytest.raises(ValidationError):
        PenaltyConfig(-1.0)
    with pytest.raises(ValidationError, match="one entry per location"):
        PenaltyConfig(1.0, [1.0, 2.0]).local_weights(3)


def test_graph_size_mismatch(small_gaussian):
    ds, _, pen = small_gaussian
    with pytest.raises(ValidationError, match="locations"):
        fit(ds, chain_graph(5), pen)


def test_matches_dense_oracle(small_gaussian):
    ds, graph, pen = small_gaussian
    state, path = fit(ds, graph, pen, TIGHT)
    B_star = oracle.gaussian_oracle(ds, graph, pen)
    assert state.converged
    assert np.linalg.norm(state.B - B_star) / np.linalg.norm(B_star) <= 1e-6
    f_star = oracle.objective(ds, graph, pen, B_star)
    assert abs(oracle.objective(ds, graph, pen, state.B) - f_star) <= 1e-6 * abs(f_star)


def test_objective_trace_approaches_optimum(small_gaussian):
    ds, graph, pen = small_gaussian
    _, path = fit(ds, graph, pen, TIGHT)
    f_star = oracle.objective(ds, graph, pen, oracle.gaussian_oracle(ds, graph, pen))
    assert abs(path.objective[-1] - f_star) <= 1e-6 * abs(f_star)


@pytest.mark.parametrize("fixture", ["small_gaussian", "small_binomial"])
def test_decoupled_without_aggregation(fixture, request):
    ds, graph, pen = request.getfixturevalue(fixture)
    pen0 = pen.with_lambda_agg(0.0)
    state, _ = fit(ds, graph, pen0, TIGHT)
    local = fit_local_only(ds, pen.lambda_sm, pen.lambda_sp, controls=TIGHT.controls)
    assert np.max(np.abs(state.B - local.B)) <= 1e-8


def test_intercept_rows_of_z_and_u_stay_zero(small_binomial):
    ds, graph, pen = small_binomial
    worst = []

    def check(st):
        worst.append(max(np.max(np.abs(st.Z[0])), np.max(np.abs(st.U[0]))))

    fit(ds, graph, pen, AdmmConfig(), callback=check)
    assert worst and max(worst) <= 1e-14


def test_truncated_run_equals_path_prefix(small_binomial):
    ds, graph, pen = small_binomial
    _, long_path = fit(ds, graph, pen, AdmmConfig(record_path=True))
    k = min(7, len(long_path))
    state, _ = fit(ds, graph, pen, AdmmConfig(max_iters=k))
    assert state.k == k
    np.testing.assert_array_equal(state.B, long_path.snapshot(k))


def test_schemes_share_fixed_point(small_gaussian):
    ds, graph, pen = small_gaussian
    sols = [fit(ds, graph, pen, TIGHT.replace(adapt=a))[0].B for a in ("fixed", "scalar", "vector")]
    for B in sols[1:]:
        assert np.max(np.abs(B - sols[0])) <= 1e-7


def test_first_iterate_is_ridge_local_solve(small_gaussian):
    ds, graph, pen = small_gaussian
    rho = 3.0
    state, _ = fit(ds, graph, pen, AdmmConfig(rho_init=rho, max_iters=1))
    p = ds.tau + 1
    for l in range(ds.L):
        prob = LocalProblem.standalone(ds.blocks[l], ds.y, "gaussian", lambda_sm=pen.lambda_sm,
                                       rho=rho, z=np.zeros(p), u=np.zeros(p))
        np.testing.assert_allclose(state.B[:, l], solve_local_gaussian_direct(prob), atol=1e-12)


def test_converged_runs_meet_tolerances(small_binomial):
    ds, graph, pen = small_binomial
    state, _ = fit(ds, graph, pen, AdmmConfig())
    assert state.converged
    assert state.r_norm <= state.eps_pr and state.s_norm <= state.eps_dual


def test_max_iters_is_not_an_error(small_gaussian):
    ds, graph, pen = small_gaussian
    state, path = fit(ds, graph, pen, AdmmConfig(max_iters=2))
    assert not state.converged and state.k == 2 and len(path) == 2


def test_min_iters_forces_longer_run(small_gaussian):
    ds, graph, pen = small_gaussian
    state, _ = fit(ds, graph, pen, AdmmConfig())
    forced, _ = fit(ds, graph, pen, AdmmConfig(min_iters=state.k + 5))
    assert forced.k == state.k + 5


def test_threads_do_not_change_result(small_binomial):
    ds, graph, pen = small_binomial
    a, _ = fit(ds, graph, pen, AdmmConfig(), threads=1)
    b, _ = fit(ds, graph, pen, AdmmConfig(), threads=4)
    np.testing.assert_array_equal(a.B, b.B)


def test_oracle_rejects_unsupported_problems(small_binomial):
    ds, graph, pen = small_binomial
    with pytest.raises(ValidationError):
        oracle.gaussian_oracle(ds, graph, pen)
    ds2, _ = random_dataset(20, 4, 3, seed=1)
    with pytest.raises(ValidationError):
        oracle.gaussian_oracle(ds2, chain_graph(3), PenaltyConfig(1.0, 0.0, 1.0))
