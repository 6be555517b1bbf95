import numpy as np
import pytest

from oracles import naive_matmul
from rsvdrec.completion import (
    CompletionConfig,
    CompletionResult,
    ObservedMatrix,
    dx_residual,
    em_complete,
    initialize_fill,
    masked_objective,
    predict_scores,
)
from rsvdrec.core import RsvdConfig
from rsvdrec.errors import InputError


def low_rank_instance(n, m, rank, missing, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, rank)) @ rng.standard_normal((rank, m))
    mask = rng.random((n, m)) >= missing
    return X, mask


# --------------------------------------------------------------------------
# ObservedMatrix


def test_observed_matrix_basics():
    obs = ObservedMatrix(2, 3, [0, 1, 1], [2, 0, 1], [5.0, 1.0, 2.0])
    assert obs.shape == (2, 3) and obs.n_observed == 3
    assert obs.omega == {(0, 2), (1, 0), (1, 1)}
    np.testing.assert_array_equal(obs.dense(), [[0, 0, 5], [1, 2, 0]])
    np.testing.assert_array_equal(obs.row_counts(), [1, 2])
    np.testing.assert_array_equal(obs.row_items(1), [0, 1])


@pytest.mark.parametrize(
    "args",
    [
        (2, 2, [], [], []),
        (2, 2, [0, 0], [1, 1], [1.0, 2.0]),
        (2, 2, [2], [0], [1.0]),
        (2, 2, [0], [-1], [1.0]),
        (2, 2, [0], [0], [np.nan]),
        (0, 2, [0], [0], [1.0]),
    ],
)
def test_observed_matrix_rejects(args):
    with pytest.raises(InputError):
        ObservedMatrix(*args)


def test_from_dense_with_mask():
    X = np.arange(6.0).reshape(2, 3)
    obs = ObservedMatrix.from_dense(X, X > 2)
    assert obs.entries == [(1, 0, 3.0), (1, 1, 4.0), (1, 2, 5.0)]


# --------------------------------------------------------------------------
# objective and fill


def test_masked_objective_by_hand():
    obs = ObservedMatrix(2, 2, [0, 1], [0, 1], [3.0, 1.0])
    U = np.array([[1.0], [0.0]])
    V = np.array([[2.0], [5.0]])
    # only (0,0) and (1,1) count: (3 - 2)^2 + (1 - 0)^2, plus 0.5 * (1 + 29)
    assert masked_objective(obs, U, V, 0.5) == pytest.approx(2.0 + 15.0)


def test_masked_objective_full_mask_equals_frobenius(rng):
    X = rng.standard_normal((4, 3))
    U, V = rng.standard_normal((4, 2)), rng.standard_normal((3, 2))
    full = ObservedMatrix.from_dense(X)
    assert masked_objective(full, U, V, 0.0) == pytest.approx(np.sum((X - U @ V.T) ** 2))


def test_masked_objective_dimension_mismatch():
    obs = ObservedMatrix(2, 2, [0], [0], [1.0])
    with pytest.raises(InputError):
        masked_objective(obs, np.ones((3, 1)), np.ones((2, 1)), 0.0)


def test_initialize_fill_modes():
    # column 2 has no observation and falls back to the global mean 3
    obs = ObservedMatrix(2, 3, [0, 1, 1], [0, 0, 1], [1.0, 3.0, 5.0])
    col = initialize_fill(obs, "column_mean")
    np.testing.assert_array_equal(col, [[1.0, 5.0, 3.0], [3.0, 5.0, 3.0]])
    row = initialize_fill(obs, "row_mean")
    np.testing.assert_array_equal(row, [[1.0, 1.0, 1.0], [3.0, 5.0, 4.0]])
    glob = initialize_fill(obs, "global_mean")
    np.testing.assert_array_equal(glob, [[1.0, 3.0, 3.0], [3.0, 5.0, 3.0]])
    with pytest.raises(InputError):
        initialize_fill(obs, "median")


def test_dx_residual_definition():
    A = np.zeros((2, 2))
    B = np.array([[3.0, 0.0], [0.0, 4.0]])
    assert dx_residual(B, A, [(0, 0), (1, 1)]) == pytest.approx(5.0 / np.sqrt(2))
    assert dx_residual(B, A, np.eye(2, dtype=bool), n_set=25) == pytest.approx(1.0)
    assert dx_residual(B, B, [(0, 1)]) == 0.0
    with pytest.raises(InputError):
        dx_residual(B, A, [])
    with pytest.raises(InputError):
        dx_residual(B, np.zeros((3, 3)), [(0, 0)])


def test_config_validation():
    inner = RsvdConfig(1)
    with pytest.raises(InputError):
        CompletionConfig(inner, solver="sgd")
    with pytest.raises(InputError):
        CompletionConfig(inner, init_fill="zero")
    with pytest.raises(InputError):
        CompletionConfig(inner, em_max_iter=0)
    with pytest.raises(InputError):
        CompletionConfig(inner, em_tol=0.0)


# --------------------------------------------------------------------------
# EM completion


@pytest.mark.parametrize("solver", ["closed_form", "als"])
def test_rank1_recovery(solver):
    X, mask = low_rank_instance(10, 8, 1, 0.3, seed=0)
    cfg = CompletionConfig(RsvdConfig(1, 1e-6, tol=1e-10, max_iter=2000), solver=solver, em_max_iter=300, em_tol=1e-10)
    res = em_complete(ObservedMatrix.from_dense(X, mask), cfg)
    assert np.abs(res.X_hat - X)[~mask].max() < 1e-3
    np.testing.assert_array_equal(res.X_hat[mask], X[mask])


def test_observed_entries_stay_clamped(rng):
    X, mask = low_rank_instance(12, 9, 2, 0.4, seed=1)
    X = X + 0.1 * rng.standard_normal(X.shape)
    res = em_complete(ObservedMatrix.from_dense(X, mask), CompletionConfig(RsvdConfig(2, 0.5), em_max_iter=20))
    np.testing.assert_array_equal(res.X_hat[mask], X[mask])


def test_em_masked_objective_nonincreasing(rng):
    X, mask = low_rank_instance(15, 12, 3, 0.3, seed=2)
    X = X + 0.2 * rng.standard_normal(X.shape)
    obs = ObservedMatrix.from_dense(X, mask)
    lam = 0.3
    values = []
    # rerun with increasing EM budgets to read off the model after each step
    for t in range(1, 15):
        res = em_complete(obs, CompletionConfig(RsvdConfig(3, lam), em_max_iter=t, em_tol=1e-300))
        values.append(masked_objective(obs, res.U, res.V, lam))
    assert np.all(np.diff(values) <= 1e-9 * values[0])


@pytest.mark.parametrize("seed", range(4))
def test_dx_eventually_below_tolerance(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(10, 51)), int(rng.integers(8, 41))
    rank = int(rng.integers(1, 6))
    X, mask = low_rank_instance(n, m, rank, 0.25, seed=seed)
    res = em_complete(
        ObservedMatrix.from_dense(X, mask), CompletionConfig(RsvdConfig(rank, 1e-3), em_max_iter=2000, em_tol=1e-6)
    )
    assert res.converged and res.dx_history[-1] <= 1e-6
    assert len(res.model_dx_history) == res.em_iterations == len(res.dx_history)


@pytest.mark.slow
def test_movielens_shaped_binary_em_settles_within_200_steps():
    from rsvdrec.datasets import mask_out, synthetic_implicit

    masked = mask_out(synthetic_implicit(), 100, 90, seed=0)
    cfg = CompletionConfig(RsvdConfig(3, 3.0), em_max_iter=200, em_tol=1e-4)
    res = em_complete(masked.train, cfg)
    dx = np.array(res.dx_history)
    assert np.all(np.diff(dx) < 0), "dX should decrease monotonically"
    assert dx[-1] < 1e-4, f"dX after {res.em_iterations} steps is {dx[-1]:.3e}"


def test_no_missing_entries_converges_in_one_step(rng):
    X = rng.standard_normal((5, 4))
    res = em_complete(ObservedMatrix.from_dense(X), CompletionConfig(RsvdConfig(2, 0.1)))
    assert res.em_iterations == 1 and res.dx_history == [0.0] and res.converged


def test_em_rejects_rank_above_dimensions():
    obs = ObservedMatrix(2, 3, [0], [0], [1.0])
    with pytest.raises(InputError):
        em_complete(obs, CompletionConfig(RsvdConfig(3)))


# --------------------------------------------------------------------------
# scores


def test_predict_scores_matches_naive_product(rng):
    U, V = rng.standard_normal((6, 3)), rng.standard_normal((5, 3))
    res = CompletionResult(U, V, U @ V.T, [], 0, True)
    full = naive_matmul(U, V.T)
    for u in range(6):
        np.testing.assert_allclose(predict_scores(res, u), full[u], atol=1e-14)
    with pytest.raises(InputError):
        predict_scores(res, 6)
    with pytest.raises(InputError):
        predict_scores(res, -1)
