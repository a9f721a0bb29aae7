from __future__ import annotations

import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from topnbench.models import EASE, SLIM, ConfigurationError, ItemWeightMatrix
from topnbench.models.linear import ConvergenceWarning, ease_weights, slim_column, slim_weights

from .conftest import random_matrix


def matrix_from(x):
    x = np.asarray(x, dtype=float)
    return random_matrix(*x.shape, 0.0, nonempty=False).with_pairs(*np.nonzero(x))


# ------------------------------------------------------------------ EASE


def test_ease_2x2_exact():
    # X'X = [[2, 1], [1, 2]]
    m = matrix_from([[1, 1], [1, 0], [0, 1]])
    b, p = ease_weights(m.csr, 1.0)
    p_exact = np.array([[3.0, -1.0], [-1.0, 3.0]]) / 8.0
    np.testing.assert_allclose(p, p_exact, atol=1e-15)
    np.testing.assert_allclose(b, [[0.0, 1 / 3], [1 / 3, 0.0]], atol=1e-15)


def test_ease_inverse_residual_and_zero_diagonal(small_corpus):
    l2 = 238.5621338
    b, p = ease_weights(small_corpus.csr, l2)
    g = (small_corpus.csr.T @ small_corpus.csr).toarray() + l2 * np.eye(small_corpus.n_items)
    resid = np.abs(g @ p - np.eye(small_corpus.n_items)).max(axis=1)
    assert resid.max() < 1e-8
    assert (np.diag(b) == 0).all()
    assert np.isfinite(b).all()


def test_ease_ridge_limit():
    m = random_matrix(40, 15, 0.3, seed=1)
    small = np.abs(ease_weights(m.csr, 10.0)[0]).max()
    huge = np.abs(ease_weights(m.csr, 1e7)[0]).max()
    assert huge < 1e-4 < small


def test_ease_rejects_nonpositive_l2():
    with pytest.raises(ConfigurationError):
        ease_weights(sp.csr_matrix(np.eye(2)), 0.0)


def test_empty_profile_scores_zero():
    m = matrix_from([[1, 1, 0], [0, 1, 1], [0, 0, 0]])
    for model in (EASE(1.0), SLIM(k=3, alpha=0.01, l1_ratio=0.1)):
        model.fit(m)
        assert not model.score(np.array([2])).any()


# ------------------------------------------------------------------ SLIM


def column_objective(g, j, w, l1, l2):
    return 0.5 * (g[j, j] - 2 * g[:, j] @ w + w @ g @ w) + l1 * np.abs(w).sum() + 0.5 * l2 * w @ w


def projected_gradient(g, j, l1, l2, iters=200_000, tol=1e-14):
    """Non-negative proximal gradient on one SLIM column with a fixed 1/L step."""
    n = g.shape[0]
    step = 1.0 / (np.linalg.eigvalsh(g).max() + l2)
    w = np.zeros(n)
    prev = column_objective(g, j, w, l1, l2)
    for _ in range(iters):
        grad = g @ w - g[:, j] + l2 * w
        w = np.maximum(w - step * (grad + l1), 0.0)
        w[j] = 0.0
        obj = column_objective(g, j, w, l1, l2)
        if prev - obj < tol:
            break
        prev = obj
    return w


def test_slim_matches_projected_gradient_oracle():
    rng = np.random.default_rng(3)
    x = (rng.random((12, 5)) < 0.5).astype(float)
    x[0] = 1.0
    m_users = x.shape[0]
    alpha, ratio = 0.1, 0.5
    l1, l2 = alpha * ratio * m_users, alpha * (1 - ratio) * m_users
    g = x.T @ x
    for j in range(5):
        w, hist, ok = slim_column(sp.csr_matrix(x), j, l1, l2, max_sweeps=10_000, tol=1e-15)
        oracle = projected_gradient(g, j, l1, l2)
        assert column_objective(g, j, w, l1, l2) == pytest.approx(column_objective(g, j, oracle, l1, l2), abs=1e-8)
        np.testing.assert_allclose(w, oracle, atol=1e-5)
    # the full solver with k >= n reproduces the same columns
    b, _ = slim_weights(sp.csr_matrix(x), alpha, ratio, k=5, max_sweeps=10_000, tol=1e-15)
    for j in range(5):
        np.testing.assert_allclose(b.toarray()[:, j], projected_gradient(g, j, l1, l2), atol=1e-5)


def test_slim_twin_column():
    rng = np.random.default_rng(0)
    x = (rng.random((50, 6)) < 0.3).astype(float)
    x[:, 5] = x[:, 2]
    x[0, 2] = x[0, 5] = 1.0
    b, _ = slim_weights(sp.csr_matrix(x), alpha=1e-6, l1_ratio=0.5, k=6, max_sweeps=1000, tol=1e-12)
    w = b.toarray()[:, 5]
    g22 = x[:, 2] @ x[:, 2]
    m = x.shape[0]
    l1, l2 = 1e-6 * 0.5 * m, 1e-6 * 0.5 * m
    assert w[2] == pytest.approx((g22 - l1) / (g22 + l2), abs=1e-3)
    assert np.abs(np.delete(w, 2)).max() < 1e-3


def test_slim_objective_monotone_per_sweep():
    rng = np.random.default_rng(8)
    for trial in range(10):
        x = (rng.random((60, 20)) < 0.25).astype(float)
        for j in range(0, 20, 4):
            _, hist, _ = slim_column(sp.csr_matrix(x), j, l1=0.05, l2=0.5, max_sweeps=200, tol=1e-12)
            rel = np.diff(hist) / np.maximum(np.abs(hist[:-1]), 1e-300)
            assert rel.max() <= 1e-9, f"trial {trial} column {j}"


def test_slim_weights_contract(small_corpus):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = SLIM(k=10, alpha=0.01, l1_ratio=0.1).fit(small_corpus)
    b = model.weights_.weights
    assert (b.data >= 0).all()
    assert (b.diagonal() == 0).all()
    assert np.diff(b.tocsc().indptr).max() <= 10
    assert model.converged_.dtype == bool


def test_slim_nonconvergence_warns():
    m = random_matrix(60, 25, 0.3, seed=2)
    with pytest.warns(ConvergenceWarning):
        slim_weights(m.csr, alpha=1e-4, l1_ratio=0.5, k=25, max_sweeps=1, tol=1e-12)


def test_slim_rejects_bad_params():
    x = sp.csr_matrix(np.eye(3))
    for kw in ({"alpha": 0, "l1_ratio": 0.5, "k": 2}, {"alpha": 1, "l1_ratio": 0, "k": 2}, {"alpha": 1, "l1_ratio": 0.5, "k": 0}):
        with pytest.raises(ConfigurationError):
            slim_weights(x, **kw)


def test_item_weight_round_trip(tmp_path):
    m = random_matrix(30, 8, 0.4, seed=4)
    for weights in (ease_weights(m.csr, 5.0)[0], slim_weights(m.csr, 0.01, 0.2, k=4)[0]):
        iw = ItemWeightMatrix(weights)
        iw.save(tmp_path / "w.txt")
        back = ItemWeightMatrix.load(tmp_path / "w.txt")
        np.testing.assert_array_equal(back.dense(), iw.dense())


def test_linear_models_never_recommend_train(small_splits):
    fold = small_splits[1]
    for model in (EASE(100.0), SLIM(k=20, alpha=0.01, l1_ratio=0.1)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model.fit(fold.train)
        for u, rl in model.recommend_all(n=20).items():
            assert not np.isin(rl.items, fold.train.profile(u)).any()
