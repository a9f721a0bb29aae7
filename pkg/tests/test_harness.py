from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest
import yaml

from topnbench.cli import main
from topnbench.corpus import carve_validation
from topnbench.harness import (
    PRESETS,
    SEARCH_SPACES,
    BordaError,
    ExperimentConfig,
    Param,
    SearchSpace,
    TuningError,
    borda_count,
    default_trials,
    emit_report,
    load_tables_csv,
    max_points,
    preset,
    preset_violations,
    run_experiment,
    run_folds,
    tune,
)
from topnbench.harness.config import OUTPUT_ENV
from topnbench.harness.experiment import validation_ndcg
from topnbench.metrics import ACCURACY_METRICS, METRICS, MetricReport
from topnbench.models import REGISTRY, ConfigurationError, make
from topnbench.synthetic import synthetic_ratings, write_ratings

from .conftest import DATA_DIR


@pytest.fixture(scope="module")
def ratings_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "ratings.tsv"
    write_ratings(synthetic_ratings(120, 80, 20, seed=2), path)
    return path


def write_config(tmp_path, ratings_file, algorithms, fmt="yaml", **extra):
    doc = {
        "dataset": {"path": str(ratings_file), "format": "tsv", "threshold": 3, "p": 2, "name": "toy"},
        "algorithms": algorithms,
        "cutoffs": [5, 10],
        "output_dir": str(tmp_path / "out"),
        **extra,
    }
    path = tmp_path / f"exp.{fmt}"
    path.write_text(json.dumps(doc) if fmt == "json" else yaml.safe_dump(doc))
    return path


# ------------------------------------------------------------------ config


@pytest.mark.parametrize("fmt", ["yaml", "json"])
def test_config_load(tmp_path, ratings_file, fmt):
    algs = ["MostPop", {"name": "EASE", "preset": "ml1m"}, {"name": "ItemKNN", "params": {"k": 7}, "preset": "ml1m"}]
    cfg = ExperimentConfig.load(write_config(tmp_path, ratings_file, algs, fmt))
    assert cfg.cutoffs == [5, 10] and cfg.repeats == 5 and cfg.seed == 42
    table = {a.name: a.resolved() for a in cfg.algorithms}
    assert table == {"MostPop": {}, "EASE": {"l2": 238.5621338}, "ItemKNN": {"k": 7, "similarity": "cosine"}}


def test_config_errors(tmp_path, ratings_file):
    bad = [
        {"algorithms": ["MostPop"]},
        {"dataset": {"path": "x", "format": "xlsx"}, "algorithms": []},
        {"dataset": {"path": "x"}, "algorithms": ["Nope"]},
        {"dataset": {"path": "x"}, "algorithms": [{"name": "EASE", "preset": "netflix"}]},
        {"dataset": {"path": "x"}, "algorithms": [], "cutoffs": [0]},
        {"dataset": {"path": "x"}, "algorithms": [], "colour": "red"},
    ]
    for doc in bad:
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(doc)


def test_output_dir_env_override(tmp_path, ratings_file, monkeypatch):
    cfg = ExperimentConfig.load(write_config(tmp_path, ratings_file, ["MostPop"]))
    assert cfg.output_path == tmp_path / "out"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "elsewhere"))
    assert cfg.output_path == tmp_path / "elsewhere"


# ------------------------------------------------------------------ presets and search spaces


def test_every_preset_builds_its_model():
    for alg, by_ds in PRESETS.items():
        assert alg in REGISTRY
        for ds, values in by_ds.items():
            make(alg, **values)


def test_search_space_params_are_constructor_args():
    for alg, space in SEARCH_SPACES.items():
        make(alg, **space.sample(np.random.default_rng(0)))


def test_published_presets_outside_search_space():
    v = preset_violations()
    assert set(v) == {("iALS", "amazon"), ("iALS", "ml1m"), ("iALS", "epinions"), ("NeuMF", "amazon")}
    assert any("batch_size" in s for s in v[("NeuMF", "amazon")])
    assert all(any(s.startswith("reg=") for s in v[("iALS", ds)]) for ds in ("ml1m", "amazon", "epinions"))


def test_sampling_stays_in_bounds_and_log_uniform_is_log_spread():
    rng = np.random.default_rng(1)
    for space in SEARCH_SPACES.values():
        for _ in range(200):
            assert space.violations(space.sample(rng)) == []
    p = Param("lr", "real", 1e-5, 1.0, dist="log-uniform")
    logs = np.log10([p.sample(rng) for _ in range(20_000)])
    # uniform on [-5, 0] puts a fifth of the mass in every decade
    counts = np.histogram(logs, bins=5, range=(-5, 0))[0] / len(logs)
    np.testing.assert_allclose(counts, 0.2, atol=0.015)


def test_param_validation():
    with pytest.raises(ConfigurationError):
        Param("x", "real", 2, 1)
    with pytest.raises(ConfigurationError):
        Param("x", "real", 0, 1, dist="log-uniform")
    with pytest.raises(ConfigurationError):
        Param("x", "choice")
    with pytest.raises(ConfigurationError):
        preset("EASE", "netflix")


def test_default_trial_budget():
    assert default_trials("MultiVAE") == 50
    assert default_trials("SLIM") == 20
    assert default_trials("MostPop") == 20


# ------------------------------------------------------------------ tuning


def test_tune_point_space_runs_one_trial(small_corpus):
    space = SearchSpace((Param("k", "int", 10, 10), Param("similarity", "choice", choices=("cosine",))))
    res = tune("ItemKNN", space, 30, small_corpus)
    assert len(res.trials) == 1 and res.best == {"k": 10, "similarity": "cosine"}


def test_tune_mostpop_has_nothing_to_tune(small_corpus):
    res = tune("MostPop", SEARCH_SPACES["MostPop"], 20, small_corpus)
    assert res.best == {} and len(res.trials) == 1


def test_tune_matches_exhaustive_reevaluation(small_corpus):
    ks, sims = (5, 20, 60), ("cosine", "jaccard")
    space = SearchSpace((Param("k", "choice", choices=ks), Param("similarity", "choice", choices=sims)))
    res = tune("UserKNN", space, 40, small_corpus, seed=3)
    inner, val = carve_validation(small_corpus, 0.2, 3)
    exhaustive = {
        (k, s): validation_ndcg(make("UserKNN", k=k, similarity=s).fit(inner), val) for k, s in itertools.product(ks, sims)
    }
    sampled = {(t.params["k"], t.params["similarity"]) for t in res.trials}
    best_sampled = max(exhaustive[c] for c in sampled)
    assert res.score == best_sampled
    assert exhaustive[(res.best["k"], res.best["similarity"])] == res.score
    if sampled == set(exhaustive):
        assert res.score == max(exhaustive.values())


def test_tune_ties_keep_first_trial(small_corpus):
    space = SearchSpace((Param("k", "choice", choices=(5, 6, 7, 8)),))
    res = tune("ItemKNN", space, 10, small_corpus, objective=lambda m, v: 1.0)
    assert res.best == res.trials[0].params


def test_tune_all_trials_failing_raises(small_corpus):
    space = SearchSpace((Param("similarity", "choice", choices=("manhattan", "chebyshev")),))
    with pytest.raises(TuningError, match="every ItemKNN trial failed"):
        tune("ItemKNN", space, 3, small_corpus)


# ------------------------------------------------------------------ runs


def test_run_folds_grid_and_determinism(small_splits):
    algs = {"Random": {}, "MostPop": {}}
    a = run_folds(small_splits, algs, (10,))
    b = run_folds(small_splits, algs, (10,))
    assert len(a.cells) == 2 * 5 and not a.failed
    assert a.to_csv() == b.to_csv()
    assert all(t.train_seconds >= 0 and t.eval_seconds >= 0 for t in a.timings)
    assert len(a.timings) == 10
    means = a.fold_means(10)
    assert means["MostPop"]["nDCG"] > means["Random"]["nDCG"]


def test_failed_cell_is_recorded_and_run_continues(small_splits):
    rep = run_folds(small_splits, {"ItemKNN": {"similarity": "manhattan"}, "MostPop": {}}, (10, 20))
    assert len(rep.failed) == 5 * 2
    assert all("manhattan" in c.error for c in rep.failed)
    assert set(rep.fold_means(10)) == {"MostPop"}
    assert "failed" in rep.to_csv()


# ------------------------------------------------------------------ Borda


def test_borda_maxima_and_total_points():
    tables = load_tables_csv(DATA_DIR / "published_at10.csv")
    assert max_points(12, 6, 3) == 198
    assert max_points(12, 1, 3) == 33
    board = borda_count(tables)
    c, votes = 12, 6 * 3
    assert sum(e.points for e in board) == pytest.approx(votes * c * (c - 1) / 2)
    dominant = {ds: {**t, "X": {m: 1.0 for m in ACCURACY_METRICS}} for ds, t in tables.items()}
    dominant = {ds: {a: v for a, v in t.items() if a != "Random"} for ds, t in dominant.items()}
    top = borda_count(dominant)[0]
    assert (top.algorithm, top.points) == ("X", 198)


def test_borda_invariant_under_monotone_transform():
    tables = load_tables_csv(DATA_DIR / "published_at10.csv")
    warped = {
        ds: {a: {m: math.exp(5 * v) ** 3 + 2 for m, v in row.items()} for a, row in t.items()} for ds, t in tables.items()
    }
    assert [(e.algorithm, e.points) for e in borda_count(warped)] == [(e.algorithm, e.points) for e in borda_count(tables)]


def test_borda_ties_and_lower_is_better():
    tables = {"d": {"a": {"nDCG": 0.5, "ARP": 10}, "b": {"nDCG": 0.5, "ARP": 20}, "c": {"nDCG": 0.1, "ARP": 30}}}
    pts = {e.algorithm: e.points for e in borda_count(tables, ["nDCG"])}
    assert pts == {"a": 1.5, "b": 1.5, "c": 0.0}
    pts = {e.algorithm: e.points for e in borda_count(tables, ["ARP"])}
    assert pts == {"a": 2.0, "b": 1.0, "c": 0.0}


def test_borda_missing_cell_raises():
    tables = {"d": {"a": {"nDCG": 0.5}, "b": {}}}
    with pytest.raises(BordaError, match="algorithm='b'"):
        borda_count(tables, ["nDCG"])


# ------------------------------------------------------------------ reports


def test_emit_report_empty_writes_headers(tmp_path):
    files = emit_report(MetricReport("empty"), format="csv", path=tmp_path)
    assert files
    acc = (tmp_path / "accuracy_at10.csv").read_text().splitlines()
    assert acc == ["algorithm," + ",".join(ACCURACY_METRICS)]
    assert (tmp_path / "metrics.csv").read_text().splitlines() == ["algorithm,fold,cutoff,status," + ",".join(METRICS)]


def test_emit_report_formats(tmp_path, small_splits):
    rep = run_folds(small_splits, {"Random": {}, "MostPop": {}, "ItemKNN": {"k": 20}}, (10, 20), dataset="toy")
    board = borda_count({"toy": rep.fold_means(10)})
    md = emit_report(rep, board, "markdown", tmp_path / "md")[0].read_text()
    tables = md.split("### ")[1:]
    acc = next(t for t in tables if t.startswith("Accuracy @10"))
    header = [ln for ln in acc.splitlines() if ln.startswith("|")][0]
    assert header.count("|") - 1 == len(ACCURACY_METRICS) + 1
    assert "Hardware:" in md
    doc = json.loads(emit_report(rep, board, "json", tmp_path / "js")[0].read_text())
    back = MetricReport.from_dict(doc)
    assert back.to_csv() == rep.to_csv()
    assert [e["algorithm"] for e in doc["leaderboard"]] == [e.algorithm for e in board]
    csv_files = {p.name for p in emit_report(rep, board, "csv", tmp_path / "csv")}
    assert {"accuracy_at20.csv", "correlation_at10.csv", "timing.csv", "leaderboard.csv"} <= csv_files
    assert "cpu" not in (tmp_path / "csv" / "metrics.csv").read_text()
    with pytest.raises(ValueError):
        emit_report(rep, format="xml", path=tmp_path)


# ------------------------------------------------------------------ end to end


def test_run_experiment_from_config(tmp_path, ratings_file):
    cfg = ExperimentConfig.load(write_config(tmp_path, ratings_file, ["Random", "MostPop"], repeats=5))
    rep = run_experiment(cfg)
    assert len(rep.cells) == 2 * 5 * 2 and rep.dataset == "toy"


def test_cli_verbs(tmp_path, ratings_file, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env_out"))
    cfg = write_config(tmp_path, ratings_file, ["Random", "MostPop", {"name": "ItemKNN", "params": {"k": 10}}])
    assert main(["prep", str(ratings_file), "--p", "2"]) == 0
    assert "after" in (tmp_path / "env_out" / "stats.csv").read_text()
    assert main(["split", str(cfg)]) == 0
    manifest = json.loads((tmp_path / "env_out" / "splits.json").read_text())
    assert len(manifest["folds"]) == 5
    assert main(["tune", str(cfg), "--algorithm", "ItemKNN", "--trials", "2", "-o", str(tmp_path / "tuned")]) == 0
    assert "ItemKNN" in json.loads((tmp_path / "tuned" / "tuned.json").read_text())
    run_out = tmp_path / "run"
    assert main(["run", str(cfg), "-o", str(run_out)]) == 0
    report = run_out / "report.json"
    assert report.exists() and (run_out / "report.md").exists() and (run_out / "timings.csv").exists()
    assert main(["borda", "--reports", str(report), "-o", str(tmp_path / "b")]) == 0
    assert main(["borda", "--tables", str(DATA_DIR / "published_at10.csv"), "-o", str(tmp_path / "b2")]) == 0
    assert (tmp_path / "b2" / "leaderboard.csv").read_text().splitlines()[1].startswith("EASE,")
    assert main(["correlate", str(report), "-o", str(tmp_path / "c")]) == 0
    assert main(["report", str(report), "--format", "csv", "-o", str(tmp_path / "r")]) == 0
    capsys.readouterr()


def test_cli_failure_exit_codes(tmp_path, ratings_file):
    cfg = write_config(tmp_path, ratings_file, ["MostPop", {"name": "ItemKNN", "params": {"similarity": "manhattan"}}])
    assert main(["run", str(cfg), "-o", str(tmp_path / "o")]) == 1
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("a\tb\tx\n")
    assert main(["prep", str(bad), "-o", str(tmp_path / "p")]) == 2
