"""Borda-count aggregation of per-(dataset, metric) rankings."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from ..metrics import ACCURACY_METRICS

# metrics where smaller is better; every accuracy metric is larger-is-better
LOWER_IS_BETTER = frozenset({"ARP", "PRSP", "PREO"})


class BordaError(KeyError):
    pass


@dataclass
class LeaderboardEntry:
    algorithm: str
    points: float
    #: 1-based rank per (dataset, metric) vote; tied candidates share the mean rank
    ranks: dict[tuple[str, str], float] = field(default_factory=dict)


def borda_count(
    tables: Mapping[str, Mapping[str, Mapping[str, float]]],
    metrics: Sequence[str] = ACCURACY_METRICS,
    candidates: Sequence[str] | None = None,
) -> list[LeaderboardEntry]:
    """Each (dataset, metric) pair is one vote over the candidates.

    ``tables`` maps dataset -> algorithm -> metric -> value.  With c candidates
    the best gets c - 1 points and the worst 0; tied candidates share the mean of
    the points their positions would earn.
    """
    if candidates is None:
        candidates = list(dict.fromkeys(a for t in tables.values() for a in t))
    candidates = list(candidates)
    c = len(candidates)
    entries = {a: LeaderboardEntry(a, 0.0) for a in candidates}
    for ds, table in tables.items():
        for m in metrics:
            vals = []
            for a in candidates:
                try:
                    vals.append(float(table[a][m]))
                except KeyError:
                    raise BordaError(f"missing cell: dataset={ds!r} algorithm={a!r} metric={m!r}") from None
            v = np.array(vals)
            if m in LOWER_IS_BETTER:
                v = -v
            points = rankdata(v, method="average") - 1.0
            for a, pts in zip(candidates, points):
                entries[a].points += float(pts)
                entries[a].ranks[(ds, m)] = float(c - pts)
    return sorted(entries.values(), key=lambda e: (-e.points, e.algorithm))


def max_points(n_candidates: int, n_metrics: int, n_datasets: int) -> int:
    return (n_candidates - 1) * n_metrics * n_datasets


def load_tables_csv(path) -> dict[str, dict[str, dict[str, float]]]:
    """Read ``dataset,algorithm,<metric>...`` rows into dataset -> algorithm -> metric -> value."""
    out: dict[str, dict[str, dict[str, float]]] = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            ds = row.pop("dataset")
            alg = row.pop("algorithm")
            out.setdefault(ds, {})[alg] = {k: float(v) for k, v in row.items()}
    return out
