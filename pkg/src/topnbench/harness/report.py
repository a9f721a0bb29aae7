"""Writing metric reports, leaderboards and correlation tables to disk."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

from ..metrics import ACCURACY_METRICS, BEYOND_METRICS, CorrelationTable, MetricReport, pearson_correlations
from .borda import LeaderboardEntry

FORMATS = ("csv", "json", "markdown")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}" if abs(v) < 1000 else f"{v:.1f}"
    return str(v)


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> list[list]:
    return [list(header)] + [list(r) for r in rows]


def accuracy_table(report: MetricReport, cutoff: int) -> list[list]:
    means = report.fold_means(cutoff)
    rows = sorted(means.items(), key=lambda kv: (-kv[1]["nDCG"], kv[0]))
    return _table(["algorithm", *ACCURACY_METRICS], [[a, *(v[m] for m in ACCURACY_METRICS)] for a, v in rows])


def beyond_table(report: MetricReport, cutoff: int) -> list[list]:
    means = report.fold_means(cutoff)
    return _table(["algorithm", *BEYOND_METRICS], [[a, *(v[m] for m in BEYOND_METRICS)] for a, v in means.items()])


def timing_table(report: MetricReport) -> list[list]:
    rows = sorted(report.mean_timing().items(), key=lambda kv: (-kv[1][0], kv[0]))
    return _table(["algorithm", "train_seconds", "eval_seconds"], [[a, t, e] for a, (t, e) in rows])


def leaderboard_table(board: Sequence[LeaderboardEntry]) -> list[list]:
    return _table(["algorithm", "points"], [[e.algorithm, e.points] for e in board])


def correlation_table(corr: CorrelationTable | None) -> list[list]:
    if corr is None:
        return [["metric_a", "metric_b", "r", "flag"]]
    rows = []
    for i, a in enumerate(corr.metrics):
        for b in corr.metrics[i + 1 :]:
            r = corr.value(a, b)
            rows.append([a, b, "undefined" if r is None else r, "" if r is None or abs(r) <= corr.threshold else "*"])
    return _table(["metric_a", "metric_b", "r", "flag"], rows)


def correlations(report: MetricReport, cutoff: int) -> CorrelationTable | None:
    means = report.fold_means(cutoff)
    return pearson_correlations(means) if len(means) >= 3 else None


def _csv(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in table:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _markdown(title: str, table) -> str:
    header, *rows = table
    lines = [f"### {title}", "", "| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(_fmt(v) for v in r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as e:
        raise OSError(f"cannot write report file {path}: {e}") from e


def emit_report(
    report: MetricReport,
    leaderboard: Sequence[LeaderboardEntry] = (),
    format: str = "csv",
    path=".",
    cutoffs: Sequence[int] | None = None,
) -> list[Path]:
    """Write the report in ``format`` under directory ``path``; returns the files written."""
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create report directory {out}: {e}") from e
    cutoffs = list(cutoffs or report.cutoffs or [10])
    sections: list[tuple[str, str, list[list]]] = []
    for k in cutoffs:
        sections.append((f"accuracy_at{k}", f"Accuracy @{k}", accuracy_table(report, k)))
        sections.append((f"beyond_at{k}", f"Beyond accuracy @{k}", beyond_table(report, k)))
        sections.append((f"correlation_at{k}", f"Metric correlation @{k}", correlation_table(correlations(report, k))))
    sections.append(("timing", "Timing (seconds, fold mean)", timing_table(report)))
    sections.append(("leaderboard", "Borda leaderboard", leaderboard_table(leaderboard)))
    written = []
    if format == "csv":
        for stem, _, table in sections:
            written.append(out / f"{stem}.csv")
            _write(written[-1], _csv(table))
        written.append(out / "metrics.csv")
        _write(written[-1], report.to_csv())
        written.append(out / "timings.csv")
        _write(written[-1], report.timings_csv())
    elif format == "json":
        doc = report.to_dict()
        doc["leaderboard"] = [{"algorithm": e.algorithm, "points": e.points} for e in leaderboard]
        doc["correlations"] = {
            str(k): [dict(zip(t[0], r)) for r in t[1:]]
            for k in cutoffs
            for t in [correlation_table(correlations(report, k))]
        }
        written.append(out / "report.json")
        _write(written[-1], json.dumps(doc, indent=2) + "\n")
    else:
        head = f"# {report.dataset or 'Benchmark'} report\n\n"
        if report.environment:
            head += "Hardware: " + ", ".join(f"{k}={v}" for k, v in report.environment.items()) + "\n\n"
        if any(report.excluded_users.values()):
            counts = ", ".join(f"fold {f}: {n}" for f, n in sorted(report.excluded_users.items()))
            head += f"Users with test items but no train profile (not evaluated): {counts}\n\n"
        body = "\n".join(_markdown(title, table) for _, title, table in sections)
        written.append(out / "report.md")
        _write(written[-1], head + body)
    return written
