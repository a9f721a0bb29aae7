"""One test group per acceptance criterion; the terminal summary prints PASS/FAIL per criterion.

Criteria that need the raw public datasets read their location from
``TOPNBENCH_ML1M`` / ``TOPNBENCH_EPINIONS`` / ``TOPNBENCH_AMAZON`` (or
``TOPNBENCH_DATA``) and fail when the files are absent.
"""
from __future__ import annotations

import csv
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from topnbench.cli import main
from topnbench.corpus import pcore_mask, prepare, split_repeated_holdout
from topnbench.harness import borda_count, load_tables_csv, preset, run_folds
from topnbench.harness.report import correlations
from topnbench.metrics import f1_from_averages, f1_per_user
from topnbench.models import BPRMF, EASE, IALS, MF2020, SLIM, ItemKNN, MultiVAE, NeuMF, RP3beta, UserKNN
from topnbench.models.linear import ease_weights, slim_column
from topnbench.models.memory import SIMILARITIES, pairwise_similarity
from topnbench.models.mf import bpr_triple_grad, bpr_triple_loss, ials_objective, mf_pointwise_grad, mf_pointwise_loss
from topnbench.models.nn import gradient_check
from topnbench.models.neural import MultiVAENet, NeuMFNet

from .conftest import DATA_DIR, data_file, random_matrix
from .test_corpus import pcore_oracle
from .test_memory import dense_similarity

ML_FAST = ("UserKNN", "ItemKNN", "RP3beta", "EASE", "SLIM")


def prep_stats(tmp_path, args) -> tuple[int, int, int]:
    assert main(["prep", *args, "-o", str(tmp_path)]) == 0
    rows = {r["dataset"]: r for r in csv.DictReader(open(tmp_path / "stats.csv"))}
    after = rows["after"]
    return int(after["interactions"]), int(after["users"]), int(after["items"])


# ------------------------------------------------------------------ preprocessing


@pytest.mark.acceptance("preprocessing fixtures")
def test_movielens_counts(tmp_path, capsys):
    path = data_file("TOPNBENCH_ML1M")
    assert prep_stats(tmp_path, [str(path), "--format", "dat", "--threshold", "3", "--p", "10"]) == (571_531, 5_949, 2_810)


@pytest.mark.acceptance("preprocessing fixtures")
def test_epinions_counts(tmp_path, capsys):
    path = data_file("TOPNBENCH_EPINIONS")
    assert prep_stats(tmp_path, [str(path), "--format", "ws", "--no-binarize", "--p", "2"]) == (300_475, 8_485, 8_463)


def test_amazon_counts_soft(tmp_path, capsys):
    # soft fixture: reported, never gating
    try:
        path = data_file("TOPNBENCH_AMAZON")
    except pytest.fail.Exception:
        pytest.skip("Amazon Digital Music ratings not available")
    got = prep_stats(
        tmp_path, [str(path), "--format", "csv", "--columns", "item,user,rating,timestamp", "--threshold", "3", "--p", "5"]
    )
    for g, want in zip(got, (145_523, 14_354, 10_027)):
        assert g == pytest.approx(want, rel=0.005)


# ------------------------------------------------------------------ MovieLens run


@pytest.fixture(scope="module")
def ml_report():
    path = data_file("TOPNBENCH_ML1M")
    m, _ = prepare(path, "dat", threshold=3, p=10)
    splits = split_repeated_holdout(m, 0.2, 5, seed=42)
    algs = {name: preset(name, "ml1m") for name in ("EASE", "SLIM", "RP3beta", "UserKNN", "ItemKNN", "MostPop", "Random")}
    algs["iALS"] = {**preset("iALS", "ml1m"), "epochs": 10}
    return run_folds(splits, algs, (10, 20), dataset="ml1m")


@pytest.mark.acceptance("ML-1M leaderboard")
@pytest.mark.slow
def test_movielens_leaderboard(ml_report):
    at10, at20 = ml_report.fold_means(10), ml_report.fold_means(20)
    assert not ml_report.failed
    assert at10["EASE"]["nDCG"] == pytest.approx(0.336, abs=0.015)
    assert at10["SLIM"]["nDCG"] == pytest.approx(0.335, abs=0.015)
    assert at10["MostPop"]["nDCG"] == pytest.approx(0.159, abs=0.010)
    assert at10["Random"]["nDCG"] <= 0.02
    assert at20["EASE"]["Recall"] == pytest.approx(0.289, abs=0.02)


@pytest.mark.acceptance("ML-1M leaderboard")
@pytest.mark.slow
def test_movielens_fast_models_runtime(ml_report):
    total = sum(t.train_seconds + t.eval_seconds for t in ml_report.timings if t.algorithm in ML_FAST)
    assert total < 30 * 60


@pytest.mark.acceptance("ML-1M ranking property")
@pytest.mark.slow
def test_movielens_ranking_property(ml_report):
    at10 = ml_report.fold_means(10)
    order = sorted(at10, key=lambda a: -at10[a]["nDCG"])
    assert len(order) == 8
    assert set(order[:3]) <= {"EASE", "SLIM", "RP3beta", "UserKNN"}
    assert set(order[-2:]) == {"MostPop", "Random"}


@pytest.mark.acceptance("ML-1M beyond-accuracy fixtures")
@pytest.mark.slow
def test_movielens_beyond_accuracy(ml_report):
    at10 = ml_report.fold_means(10)
    assert at10["Random"]["IC"] == 2810
    assert at10["Random"]["GiniComplement"] == pytest.approx(0.876, abs=0.02)
    assert at10["MostPop"]["ARP"] == pytest.approx(1746.7, abs=30)
    assert at10["MostPop"]["APLT"] == 0


@pytest.mark.acceptance("correlation reproduction")
@pytest.mark.slow
def test_movielens_correlations(ml_report):
    corr = correlations(ml_report, 10)
    for a, b in (("PRSP", "ACLT"), ("ACLT", "APLT")):
        r = corr.value(a, b)
        assert r is not None and abs(r) >= 0.9, (a, b, r)


# ------------------------------------------------------------------ F1 and Borda


@pytest.mark.acceptance("F1 toy oracle")
def test_f1_toy_systems():
    a = [(0.2, 0.3), (0.5, 0.6), (0.3, 0.4), (0.6, 0.3), (0.2, 0.3)]
    b = [(0.2, 0.4), (0.5, 0.2), (0.4, 0.4), (0.2, 0.6), (0.5, 0.4)]
    results = []
    for rows in (a, b):
        p, r = map(np.array, zip(*rows))
        results.append((round(f1_per_user(p, r), 3), round(f1_from_averages(p.mean(), r.mean()), 3)))
    assert results == [(0.354, 0.370), (0.339, 0.379)]


@pytest.mark.acceptance("Borda fixture")
def test_borda_on_published_tables():
    board = borda_count(load_tables_csv(DATA_DIR / "published_at10.csv"))
    assert board[0].algorithm == "EASE"
    assert {e.algorithm for e in board[:4]} == {"EASE", "RP3beta", "SLIM", "UserKNN"}
    published = {
        "EASE": 185, "RP3beta": 169, "SLIM": 160, "UserKNN": 154, "MF2020": 115, "ItemKNN": 99,
        "MultiVAE": 92, "iALS": 90, "NeuMF": 61, "BPRMF": 45, "MostPop": 18, "Random": 0,
    }
    for e in board:
        assert abs(e.points - published[e.algorithm]) <= 4, (e.algorithm, e.points)


# ------------------------------------------------------------------ property suites


@pytest.mark.acceptance("property suites")
def test_slim_and_ials_monotone():
    rng = np.random.default_rng(21)
    for trial in range(5):
        x = (rng.random((50, 15)) < 0.3).astype(float)
        for j in range(0, 15, 3):
            _, hist, _ = slim_column(sp.csr_matrix(x), j, 0.1, 0.5, max_sweeps=100, tol=1e-12)
            assert (np.diff(hist) <= 1e-9 * np.abs(hist[:-1])).all()
        m = random_matrix(12, 10, 0.3, seed=trial)
        objs = []
        IALS(3, 10, 2.0, "log", 1.0, 0.05, seed=trial).fit(
            m, callback=lambda e, u, v: objs.append(ials_objective(m.csr, u, v, 2.0, "log", 1.0, 0.05))
        )
        assert (np.diff(objs) <= 1e-9 * np.abs(objs[:-1])).all()


@pytest.mark.acceptance("property suites")
def test_gradient_checks():
    rng = np.random.default_rng(22)
    u, vi, vj = (rng.normal(scale=0.5, size=5) for _ in range(3))
    regs = (0.01, 0.02, 0.03)
    assert gradient_check([u, vi, vj], lambda: bpr_triple_loss(u, vi, vj, *regs), bpr_triple_grad(u, vi, vj, *regs), 15) < 1e-3
    bu, bi, b = np.array([0.1]), np.array([-0.2]), np.array([0.3])
    grads = [np.atleast_1d(g) for g in mf_pointwise_grad(u, vi, bu[0], bi[0], b[0], 1.0, 0.01)]
    loss = lambda: mf_pointwise_loss(u, vi, bu[0], bi[0], b[0], 1.0, 0.01)  # noqa: E731
    assert gradient_check([u, vi, bu, bi, b], loss, grads, 13) < 1e-3
    net = NeuMFNet(4, 6, 4, rng)
    for p in net.params()[:4]:
        p *= 50.0
    users, items, labels = np.array([0, 1, 2, 3]), np.array([0, 2, 4, 5]), np.array([1.0, 0.0, 1.0, 0.0])
    _, grads = net.loss_and_grads(users, items, labels)
    assert gradient_check(net.params(), lambda: net.loss(users, items, labels), grads, 200) < 1e-3
    vae = MultiVAENet(8, 5, 3, rng)
    x = (rng.random((4, 8)) < 0.5).astype(float)
    x[:, 1] = 1.0
    eps = rng.standard_normal((4, 3))
    _, grads = vae.loss_and_grads(x, 0.2, eps)
    assert gradient_check(vae.params(), lambda: vae.loss_and_grads(x, 0.2, eps, grads=False)[0], grads, 200) < 1e-3


@pytest.mark.acceptance("property suites")
def test_ease_residual_and_similarity_oracles(small_corpus):
    l2 = 50.0
    _, p = ease_weights(small_corpus.csr, l2)
    g = (small_corpus.csr.T @ small_corpus.csr).toarray() + l2 * np.eye(small_corpus.n_items)
    assert np.abs(g @ p - np.eye(small_corpus.n_items)).max() < 1e-8
    m = random_matrix(6, 6, 0.45, seed=9)
    for kind in SIMILARITIES:
        assert np.abs(pairwise_similarity(m.csr, kind) - dense_similarity(m.csr.toarray(), kind)).max() < 1e-12


@pytest.mark.acceptance("property suites")
def test_pcore_oracle_200_instances():
    rng = np.random.default_rng(23)
    for _ in range(200):
        x = rng.random((20, 20)) < rng.uniform(0.05, 0.4)
        users, items = np.nonzero(x)
        p = int(rng.integers(1, 5))
        keep = pcore_mask(users, items, p)
        assert set(zip(users[keep].tolist(), items[keep].tolist())) == pcore_oracle(set(zip(users.tolist(), items.tolist())), p)


@pytest.mark.acceptance("property suites")
def test_no_train_items_recommended(small_splits):
    fold = small_splits[4]
    models = [
        UserKNN(20), ItemKNN(20), RP3beta(20, 1.0, 0.3), EASE(100.0), SLIM(20, 0.01, 0.1),
        IALS(8, 3), BPRMF(8, 2), MF2020(8, 2, lr=0.02), NeuMF(8, 1), MultiVAE(32, 8, 1),
    ]
    x = fold.train.csr
    for model in models:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model.fit(fold.train)
        for u, rl in model.recommend_all(n=20).items():
            assert not np.isin(rl.items, x.indices[x.indptr[u] : x.indptr[u + 1]]).any(), type(model).__name__

