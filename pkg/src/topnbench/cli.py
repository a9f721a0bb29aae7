"""Command line entry point: ``python -m topnbench <verb> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import corpus
from .harness import (
    SEARCH_SPACES,
    ExperimentConfig,
    borda_count,
    default_trials,
    emit_report,
    load_tables_csv,
    run_experiment,
    tune,
)
from .harness.config import OUTPUT_ENV, DatasetSpec
from .harness.experiment import load_splits
from .harness.report import correlation_table, correlations
from .metrics import ACCURACY_METRICS, MetricReport

_log = logging.getLogger("topnbench")


def _out_dir(args, config: ExperimentConfig | None = None) -> Path:
    if args.output:
        out = Path(args.output)
    elif config is not None:
        out = config.output_path
    else:
        out = Path(os.environ.get(OUTPUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _columns(spec: str | None) -> dict[str, int] | None:
    if not spec:
        return None
    names = [c.strip() for c in spec.split(",")]
    return {name: pos for pos, name in enumerate(names) if name in ("user", "item", "rating", "timestamp")}


def _dataset_from_args(args) -> DatasetSpec:
    threshold = None if args.no_binarize else args.threshold
    return DatasetSpec(args.path, args.format, threshold, args.p, header=args.header, columns=_columns(args.columns))


def cmd_prep(args) -> int:
    ds = _dataset_from_args(args)
    raw = corpus.load_interactions(ds.path, ds.format, ds.columns, header=ds.header)
    before = raw.stats()
    if ds.threshold is not None:
        raw = corpus.binarize(raw, ds.threshold)
    raw = corpus.pcore_filter(raw, ds.p)
    after = raw.stats()
    out = _out_dir(args)
    stats = out / "stats.csv"
    stats.write_text(
        corpus.DatasetStats.csv_header(named=True) + "\n"
        + before.to_csv_row("before") + "\n" + after.to_csv_row("after") + "\n"
    )
    with open(out / "interactions.tsv", "w") as fh:
        for rec in raw:
            fh.write(f"{rec.user}\t{rec.item}\t{rec.rating:g}\n")
    print(stats.read_text(), end="")
    return 0


def cmd_split(args) -> int:
    config = ExperimentConfig.load(args.config)
    m, splits = load_splits(config)
    out = _out_dir(args, config)
    ds = config.dataset
    corpus.write_manifest(out / "splits.json", splits, p=ds.p, threshold=ds.threshold, stats=m.stats())
    print(f"wrote {out / 'splits.json'} ({len(splits)} folds)")
    return 0


def cmd_tune(args) -> int:
    config = ExperimentConfig.load(args.config)
    _, splits = load_splits(config)
    out = _out_dir(args, config)
    names = args.algorithm or [a.name for a in config.algorithms]
    results = {}
    for name in names:
        trials = args.trials or default_trials(name)
        fixed = next((a.params for a in config.algorithms if a.name == name), {})
        res = tune(name, SEARCH_SPACES[name], trials, splits[0].train, config.seed, fixed=fixed)
        results[name] = {"params": res.best, "nDCG@10": res.score, "trials": len(res.trials)}
        print(f"{name}: nDCG@10={res.score:.4f} {res.best}")
    (out / "tuned.json").write_text(json.dumps(results, indent=2, default=str) + "\n")
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    report = run_experiment(config)
    out = _out_dir(args, config)
    emit_report(report, format="csv", path=out)
    emit_report(report, format="json", path=out)
    emit_report(report, format="markdown", path=out)
    for cell in report.failed:
        print(f"FAILED {cell.algorithm} fold {cell.fold}: {cell.error}", file=sys.stderr)
    print(f"wrote report to {out}")
    return 1 if report.failed else 0


def _load_report(path) -> MetricReport:
    return MetricReport.from_json(Path(path).read_text())


def cmd_borda(args) -> int:
    if args.tables:
        tables = load_tables_csv(args.tables)
    else:
        tables = {}
        for p in args.reports:
            rep = _load_report(p)
            tables[rep.dataset or Path(p).stem] = rep.fold_means(args.cutoff)
    board = borda_count(tables, args.metrics or ACCURACY_METRICS)
    out = _out_dir(args)
    with open(out / "leaderboard.csv", "w") as fh:
        fh.write("algorithm,points\n")
        for e in board:
            fh.write(f"{e.algorithm},{e.points:g}\n")
            print(f"{e.algorithm:10s} {e.points:g}")
    return 0


def cmd_correlate(args) -> int:
    report = _load_report(args.report)
    corr = correlations(report, args.cutoff)
    if corr is None:
        print("need at least 3 algorithms with results", file=sys.stderr)
        return 1
    for a, b, r in corr.flagged():
        print(f"{a:>15s} ~ {b:<15s} r={r:+.3f}")
    out = _out_dir(args)
    with open(out / f"correlation_at{args.cutoff}.csv", "w") as fh:
        for row in correlation_table(corr):
            fh.write(",".join(str(v) for v in row) + "\n")
    return 0


def cmd_report(args) -> int:
    report = _load_report(args.report)
    files = emit_report(report, format=args.format, path=_out_dir(args))
    for f in files:
        print(f)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="topnbench", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("-o", "--output", help=f"output directory (default: ${OUTPUT_ENV} or ./results)")
        p.set_defaults(fn=fn)
        return p

    p = add("prep", cmd_prep, "load, binarize and p-core filter a ratings file; print stats")
    p.add_argument("path")
    p.add_argument("--format", default="tsv", choices=sorted(corpus.FORMATS))
    p.add_argument("--threshold", type=float, default=3)
    p.add_argument("--no-binarize", action="store_true", help="keep every record (unary data)")
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--header", action="store_true")
    p.add_argument("--columns", help="field names in file order, e.g. item,user,rating,timestamp")

    p = add("split", cmd_split, "write the repeated hold-out fold manifest")
    p.add_argument("config")

    p = add("tune", cmd_tune, "random search on a validation split of fold 0")
    p.add_argument("config")
    p.add_argument("--algorithm", action="append")
    p.add_argument("--trials", type=int)

    p = add("run", cmd_run, "train and evaluate every configured algorithm on every fold")
    p.add_argument("config")

    p = add("borda", cmd_borda, "Borda-count leaderboard from fold-mean tables")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--tables", help="CSV with dataset,algorithm,<metric> columns")
    g.add_argument("--reports", nargs="+", help="report.json files, one per dataset")
    p.add_argument("--metrics", nargs="+")
    p.add_argument("--cutoff", type=int, default=10)

    p = add("correlate", cmd_correlate, "Pearson correlation between metrics across algorithms")
    p.add_argument("report")
    p.add_argument("--cutoff", type=int, default=10)

    p = add("report", cmd_report, "render a report.json as csv, json or markdown")
    p.add_argument("report")
    p.add_argument("--format", default="markdown", choices=("csv", "json", "markdown"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError, RuntimeError) as e:
        print(f"topnbench {args.verb}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
