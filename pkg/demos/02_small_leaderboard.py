"""
A leaderboard on synthetic data
===============================

Every recommender is trained on each fold, evaluated at 10 and 20, and the
fold means are rendered as tables.  Factor and neural models get short
schedules so the script finishes in about a minute.
"""
import logging
import tempfile
from pathlib import Path

from topnbench.corpus import binarize, build_matrix, pcore_filter, split_repeated_holdout
from topnbench.harness import borda_count, emit_report, run_folds
from topnbench.harness.report import accuracy_table, correlations
from topnbench.synthetic import synthetic_ratings

logging.basicConfig(level=logging.WARNING)

m = build_matrix(pcore_filter(binarize(synthetic_ratings(600, 400, 40, seed=5), 3), 5))
splits = split_repeated_holdout(m, 0.2, 5, seed=42)
print(m.stats())

algorithms = {
    "Random": {},
    "MostPop": {},
    "UserKNN": {"k": 50, "similarity": "cosine"},
    "ItemKNN": {"k": 50, "similarity": "cosine"},
    "RP3beta": {"k": 100, "alpha": 0.9, "beta": 0.3, "normalize": True},
    "EASE": {"l2": 200.0},
    "SLIM": {"k": 100, "alpha": 0.05, "l1_ratio": 0.01},
    "iALS": {"factors": 32, "epochs": 8, "alpha": 5.0, "scaling": "log", "epsilon": 1.0, "reg": 0.05},
    "BPRMF": {"factors": 32, "epochs": 20, "lr": 0.05},
    "MF2020": {"factors": 32, "epochs": 20, "lr": 0.02, "reg": 0.01, "negatives": 4},
    "NeuMF": {"factors": 16, "epochs": 5, "lr": 0.1},
    "MultiVAE": {"intermediate": 200, "latent": 50, "epochs": 30, "lr": 0.05, "reg": 0.2},
}
report = run_folds(splits, algorithms, (10, 20), dataset="synthetic")

# accuracy at 10, sorted by nDCG
for row in accuracy_table(report, 10):
    print("  ".join(f"{v:.3f}" if isinstance(v, float) else f"{v:>9}" for v in row))

# mean training time per fold
for alg, (train_s, eval_s) in sorted(report.mean_timing().items(), key=lambda kv: -kv[1][0]):
    print(f"{alg:10s} train {train_s:7.2f}s  eval {eval_s:5.2f}s")

# metric pairs that move together across algorithms
for a, b, r in correlations(report, 10).flagged()[:8]:
    print(f"{a:>15s} ~ {b:<15s} {r:+.2f}")

# one dataset, six accuracy votes
board = borda_count({"synthetic": report.fold_means(10)})
print([(e.algorithm, e.points) for e in board])

out = Path(tempfile.mkdtemp())
for fmt in ("csv", "json", "markdown"):
    emit_report(report, board, fmt, out)
print("report written to", out)
