"""Ranking accuracy, coverage, novelty and popularity-bias metrics.

Every function takes ranked lists (``user -> RankedList`` or ``user -> item
array``, best first) and an :class:`EvalContext` holding the test ground truth
and the train popularity of every item.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Fold

_log = logging.getLogger(__name__)

ACCURACY_METRICS = ("nDCG", "MAP", "MRR", "Precision", "Recall", "F1")
BEYOND_METRICS = ("IC", "GiniComplement", "EFD", "EPC", "PREO", "PRSP", "APLT", "ACLT", "ARP")
METRICS = ACCURACY_METRICS + BEYOND_METRICS


class MetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EvalContext:
    """Ground truth and train statistics for one fold.

    ``popularity`` is the train interaction count of every catalog item and
    ``train`` (optional) the train incidence matrix, needed only by PRSP.
    The short head is the ``ceil(0.2 n)`` most popular items, ties broken by
    ascending item index.
    """

    popularity: np.ndarray
    ground_truth: Mapping[int, np.ndarray]
    k: int = 10
    train: sp.csr_matrix | None = None
    short_head_fraction: float = 0.2
    short_head: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pop = np.asarray(self.popularity, dtype=np.float64)
        object.__setattr__(self, "popularity", pop)
        if self.k < 1:
            raise MetricError("cutoff k must be >= 1")
        n = len(pop)
        size = math.ceil(self.short_head_fraction * n - 1e-9)
        order = np.lexsort((np.arange(n), -pop))
        mask = np.zeros(n, dtype=bool)
        mask[order[:size]] = True
        object.__setattr__(self, "short_head", mask)

    @classmethod
    def from_fold(cls, fold: Fold, k: int = 10) -> EvalContext:
        return cls(fold.train.item_degrees(), fold.ground_truth(), k, fold.train.csr)

    def at(self, k: int) -> EvalContext:
        return replace(self, k=k)

    @property
    def catalog_size(self) -> int:
        return len(self.popularity)

    @property
    def total_train(self) -> float:
        return float(self.popularity.sum())

    @property
    def long_tail(self) -> np.ndarray:
        return ~self.short_head


def _items(entry) -> np.ndarray:
    items = getattr(entry, "items", entry)
    return np.asarray(items, dtype=np.int64)


def _truncated(lists: Mapping, k: int) -> dict[int, np.ndarray]:
    return {int(u): _items(v)[:k] for u, v in lists.items()}


# ---------------------------------------------------------------- per user


def precision_recall(items, truth, k: int) -> tuple[float, float]:
    if k < 1:
        raise MetricError("k must be >= 1")
    truth = np.asarray(truth)
    if len(truth) == 0:
        raise MetricError("empty ground truth")
    hits = int(np.isin(_items(items)[:k], truth).sum())
    return hits / k, hits / len(truth)


def ndcg(items, truth, k: int) -> float:
    truth = np.asarray(truth)
    rel = np.isin(_items(items)[:k], truth)
    disc = 1.0 / np.log2(np.arange(2, k + 2))
    idcg = disc[: min(len(truth), k)].sum()
    return float(disc[: len(rel)][rel].sum() / idcg) if idcg > 0 else 0.0


def average_precision(items, truth, k: int) -> float:
    truth = np.asarray(truth)
    rel = np.isin(_items(items)[:k], truth)
    if len(truth) == 0:
        return 0.0
    ranks = np.flatnonzero(rel) + 1
    prec = np.arange(1, len(ranks) + 1) / ranks
    return float(prec.sum() / min(len(truth), k))


def reciprocal_rank(items, truth, k: int) -> float:
    rel = np.flatnonzero(np.isin(_items(items)[:k], np.asarray(truth)))
    return 1.0 / (rel[0] + 1) if len(rel) else 0.0


def f1_per_user(precisions: Sequence[float], recalls: Sequence[float]) -> float:
    """Mean over users of the harmonic mean of each user's precision and recall."""
    p = np.asarray(precisions, dtype=np.float64)
    r = np.asarray(recalls, dtype=np.float64)
    if p.shape != r.shape:
        raise MetricError("precision and recall sequences differ in length")
    if len(p) == 0:
        return 0.0
    s = p + r
    f = np.divide(2 * p * r, s, out=np.zeros_like(s), where=s > 0)
    return float(f.mean())


def f1_from_averages(precision: float, recall: float) -> float:
    """Harmonic mean of already-averaged precision and recall."""
    s = precision + recall
    return 2 * precision * recall / s if s > 0 else 0.0


def _hit_table(lists: Mapping, ctx: EvalContext, k: int):
    """Users with both a list and ground truth, their (users x k) hit matrix and truth sizes."""
    users = sorted(u for u in lists if len(ctx.ground_truth.get(u, ())) > 0)
    hits = np.zeros((len(users), k), dtype=bool)
    sizes = np.zeros(len(users))
    for row, u in enumerate(users):
        items = _items(lists[u])[:k]
        truth = ctx.ground_truth[u]
        hits[row, : len(items)] = np.isin(items, truth)
        sizes[row] = len(truth)
    return users, hits, sizes


def accuracy(lists: Mapping, ctx: EvalContext) -> dict[str, float]:
    """nDCG, MAP, MRR, precision, recall and per-user F1 at ``ctx.k``.

    Averaged over users that have a list and a non-empty ground truth.
    """
    k = ctx.k
    _, hits, sizes = _hit_table(lists, ctx, k)
    if len(sizes) == 0:
        raise MetricError("no user has both a recommendation list and test items")
    n_hits = hits.sum(axis=1)
    prec = n_hits / k
    rec = n_hits / sizes
    disc = 1.0 / np.log2(np.arange(2, k + 2))
    idcg = np.cumsum(disc)[np.minimum(sizes, k).astype(int) - 1]
    ndcg_u = (hits * disc).sum(axis=1) / idcg
    cum = np.cumsum(hits, axis=1)
    ap = (hits * cum / np.arange(1, k + 1)).sum(axis=1) / np.minimum(sizes, k)
    first = np.where(hits.any(axis=1), hits.argmax(axis=1) + 1, np.inf)
    return {
        "nDCG": float(ndcg_u.mean()),
        "MAP": float(ap.mean()),
        "MRR": float((1.0 / first).mean()),
        "Precision": float(prec.mean()),
        "Recall": float(rec.mean()),
        "F1": f1_per_user(prec, rec),
    }


# ----------------------------------------------------------- aggregates


def item_coverage(lists: Mapping, k: int | None = None) -> int:
    seen = [_items(v)[:k] for v in lists.values()]
    return int(len(np.unique(np.concatenate(seen)))) if seen else 0


def recommendation_frequency(lists: Mapping, n_items: int, k: int | None = None) -> np.ndarray:
    seen = [_items(v)[:k] for v in lists.values()]
    if not seen:
        return np.zeros(n_items)
    return np.bincount(np.concatenate(seen), minlength=n_items).astype(np.float64)


def gini(freq: np.ndarray) -> float:
    f = np.sort(np.asarray(freq, dtype=np.float64))
    n = len(f)
    total = f.sum()
    if n == 0 or total == 0:
        warnings.warn("no recommendations; Gini index taken as 0", RuntimeWarning, stacklevel=2)
        return 0.0
    i = np.arange(1, n + 1)
    return float(((2 * i - n - 1) * f).sum() / (n * total))


def gini_complement(lists: Mapping, n_items: int, k: int | None = None) -> float:
    """1 - Gini of how often each catalog item is recommended (unrecommended items count as 0)."""
    return 1.0 - gini(recommendation_frequency(lists, n_items, k))


def epc_efd(lists: Mapping, ctx: EvalContext, relevance: bool = False) -> tuple[float, float]:
    """Expected popularity complement and expected free discovery.

    EPC averages ``1 - phi(i) / max phi`` and EFD averages ``-log2(phi(i) / sum phi)``
    over every list position of every user.  With ``relevance=True`` only
    test-relevant items contribute (the others count as 0) and only users with
    ground truth are averaged.  EFD skips items never seen in training.
    """
    k = ctx.k
    pop = ctx.popularity
    top = pop.max() if len(pop) else 0.0
    norm = pop / top if top > 0 else np.zeros_like(pop)
    total = ctx.total_train
    with np.errstate(divide="ignore"):
        info = -np.log2(pop / total) if total > 0 else np.full_like(pop, np.inf)
    epc_u, efd_u = [], []
    skipped = 0
    for u, entry in lists.items():
        items = _items(entry)[:k]
        if relevance:
            truth = ctx.ground_truth.get(int(u))
            if truth is None or len(truth) == 0:
                continue
            w = np.isin(items, truth).astype(np.float64)
        else:
            w = np.ones(len(items))
        finite = np.isfinite(info[items])
        skipped += int((~finite).sum())
        epc_u.append(float((w * (1.0 - norm[items])).sum() / k))
        n_ok = int(finite.sum()) if not relevance else k
        efd_u.append(float((w[finite] * info[items][finite]).sum() / n_ok) if n_ok else 0.0)
    if skipped:
        warnings.warn(f"EFD: {skipped} recommended items have zero train popularity and were skipped",
                      RuntimeWarning, stacklevel=2)
    if not epc_u:
        return 0.0, 0.0
    return float(np.mean(epc_u)), float(np.mean(efd_u))


def popularity_bias(lists: Mapping, ctx: EvalContext) -> tuple[float, float, float]:
    """(ARP, APLT, ACLT): mean list popularity, long-tail share and long-tail count per user."""
    k = ctx.k
    arp, aplt, aclt = [], [], []
    tail = ctx.long_tail
    for entry in lists.values():
        items = _items(entry)[:k]
        n_tail = int(tail[items].sum())
        arp.append(ctx.popularity[items].sum() / k)
        aplt.append(n_tail / k)
        aclt.append(n_tail)
    if not arp:
        return 0.0, 0.0, 0.0
    return float(np.mean(arp)), float(np.mean(aplt)), float(np.mean(aclt))


def _dispersion(rates: np.ndarray) -> float:
    mean = rates.mean()
    return float(rates.std() / mean) if mean > 0 else 0.0


def _group_names():
    return ("short head", "long tail")


def prsp_preo(lists: Mapping, ctx: EvalContext) -> tuple[float, float]:
    """Statistical parity and equal opportunity across short head and long tail.

    For each group g, PRSP compares ``sum_u |top-k(u) & g|`` with the number of
    candidate items in g (catalog minus train profile); PREO compares the number
    of relevant recommended items in g with the number of relevant candidates in
    g.  Both return population std / mean of the two per-group rates.
    """
    if ctx.train is None:
        raise MetricError("PRSP needs the train matrix in the context")
    k = ctx.k
    groups = (ctx.short_head, ctx.long_tail)
    users = np.array(sorted(int(u) for u in lists), dtype=np.int64)
    rec_counts = np.zeros(2)
    rel_rec = np.zeros(2)
    rel_cand = np.zeros(2)
    for u in users:
        items = _items(lists[u])[:k]
        truth = np.asarray(ctx.ground_truth.get(int(u), ()), dtype=np.int64)
        hit = items[np.isin(items, truth)]
        for g, mask in enumerate(groups):
            rec_counts[g] += mask[items].sum()
            rel_rec[g] += mask[hit].sum()
            rel_cand[g] += mask[truth].sum()
    train_in_group = np.zeros(2)
    if len(users):
        sub = ctx.train[users]
        for g, mask in enumerate(groups):
            train_in_group[g] = sub[:, mask].sum()
    cand = np.array([len(users) * m.sum() for m in groups], dtype=np.float64) - train_in_group
    names = _group_names()
    for g in range(2):
        if cand[g] == 0:
            raise MetricError(f"PRSP: no candidate items in the {names[g]} group")
        if rel_cand[g] == 0:
            raise MetricError(f"PREO: no relevant test items in the {names[g]} group")
    return _dispersion(rec_counts / cand), _dispersion(rel_rec / rel_cand)


def beyond_accuracy(lists: Mapping, ctx: EvalContext, relevance_novelty: bool = False) -> dict[str, float]:
    k = ctx.k
    epc, efd = epc_efd(lists, ctx, relevance_novelty)
    arp, aplt, aclt = popularity_bias(lists, ctx)
    prsp, preo = prsp_preo(lists, ctx)
    return {
        "IC": float(item_coverage(lists, k)),
        "GiniComplement": gini_complement(lists, ctx.catalog_size, k),
        "EFD": efd,
        "EPC": epc,
        "PREO": preo,
        "PRSP": prsp,
        "APLT": aplt,
        "ACLT": aclt,
        "ARP": arp,
    }


def evaluate(lists: Mapping, ctx: EvalContext, cutoffs: Sequence[int] = (10, 20), **kw) -> dict[int, dict[str, float]]:
    """All metrics at every cutoff; ``lists`` must be at least ``max(cutoffs)`` long."""
    out = {}
    for k in cutoffs:
        c = ctx.at(k)
        vals = accuracy(lists, c)
        vals.update(beyond_accuracy(lists, c, **kw))
        out[k] = {m: vals[m] for m in METRICS}
    return out


# ----------------------------------------------------------- correlation


@dataclass
class CorrelationTable:
    metrics: list[str]
    #: NaN where a metric has zero variance
    matrix: np.ndarray
    threshold: float = 0.9

    def value(self, a: str, b: str) -> float | None:
        r = self.matrix[self.metrics.index(a), self.metrics.index(b)]
        return None if np.isnan(r) else float(r)

    def flagged(self) -> list[tuple[str, str, float]]:
        out = []
        for i, j in combinations(range(len(self.metrics)), 2):
            r = self.matrix[i, j]
            if not np.isnan(r) and abs(r) > self.threshold:
                out.append((self.metrics[i], self.metrics[j], float(r)))
        return out

    def undefined(self) -> list[str]:
        return [m for i, m in enumerate(self.metrics) if np.isnan(self.matrix[i, i])]


def pearson_correlations(
    table: Mapping[str, Mapping[str, float]], metrics: Sequence[str] | None = None, threshold: float = 0.9
) -> CorrelationTable:
    """Pearson r between every metric pair across algorithms.

    ``table`` maps algorithm -> metric -> value.  Zero-variance metrics get NaN.
    """
    algs = list(table)
    if len(algs) < 3:
        raise MetricError("correlations need at least 3 algorithms")
    metrics = list(metrics or next(iter(table.values())).keys())
    x = np.array([[table[a][m] for a in algs] for m in metrics], dtype=np.float64)
    xc = x - x.mean(axis=1, keepdims=True)
    norm = np.sqrt((xc * xc).sum(axis=1))
    ok = norm > 1e-12 * np.maximum(np.abs(x).max(axis=1), 1.0)
    r = np.full((len(metrics), len(metrics)), np.nan)
    idx = np.flatnonzero(ok)
    if len(idx):
        sub = xc[idx] / norm[idx, None]
        r[np.ix_(idx, idx)] = np.clip(sub @ sub.T, -1.0, 1.0)
    for m in np.flatnonzero(~ok):
        _log.warning("metric %s has zero variance across algorithms; correlation undefined", metrics[m])
    return CorrelationTable(metrics, r, threshold)


# ----------------------------------------------------------- report


@dataclass
class CellResult:
    algorithm: str
    fold: int
    cutoff: int
    values: dict[str, float] | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class Timing:
    algorithm: str
    fold: int
    train_seconds: float
    eval_seconds: float


@dataclass
class MetricReport:
    """Per (algorithm, fold, cutoff) metric values plus per (algorithm, fold) timings."""

    dataset: str = ""
    cells: list[CellResult] = field(default_factory=list)
    timings: list[Timing] = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    #: fold -> users with test items but an empty train profile (no list, not averaged)
    excluded_users: dict[int, int] = field(default_factory=dict)

    def add(self, cell: CellResult) -> None:
        if cell.values is not None:
            bad = [m for m, v in cell.values.items() if not math.isfinite(v)]
            if bad:
                raise MetricError(f"non-finite values for {bad} in {cell.algorithm} fold {cell.fold}")
        self.cells.append(cell)

    @property
    def algorithms(self) -> list[str]:
        return list(dict.fromkeys(c.algorithm for c in self.cells))

    @property
    def cutoffs(self) -> list[int]:
        return sorted({c.cutoff for c in self.cells})

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    def fold_means(self, cutoff: int) -> dict[str, dict[str, float]]:
        """Algorithm -> metric -> mean over successful folds; algorithms with no success are omitted."""
        out = {}
        for alg in self.algorithms:
            rows = [c.values for c in self.cells if c.algorithm == alg and c.cutoff == cutoff and c.ok]
            if rows:
                out[alg] = {m: float(np.mean([r[m] for r in rows])) for m in METRICS}
        return out

    def mean_timing(self) -> dict[str, tuple[float, float]]:
        out = {}
        for alg in dict.fromkeys(t.algorithm for t in self.timings):
            ts = [t for t in self.timings if t.algorithm == alg]
            out[alg] = (float(np.mean([t.train_seconds for t in ts])), float(np.mean([t.eval_seconds for t in ts])))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algorithm", "fold", "cutoff", "status", *METRICS])
        for c in sorted(self.cells, key=lambda c: (c.algorithm, c.fold, c.cutoff)):
            vals = [repr(c.values[m]) for m in METRICS] if c.ok else [""] * len(METRICS)
            w.writerow([c.algorithm, c.fold, c.cutoff, "ok" if c.ok else "failed", *vals])
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algorithm", "fold", "train_seconds", "eval_seconds"])
        for t in self.timings:
            w.writerow([t.algorithm, t.fold, repr(t.train_seconds), repr(t.eval_seconds)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "environment": self.environment,
            "metrics": list(METRICS),
            "fold_means": {str(k): self.fold_means(k) for k in self.cutoffs},
            "cells": [
                {"algorithm": c.algorithm, "fold": c.fold, "cutoff": c.cutoff, "values": c.values, "error": c.error}
                for c in self.cells
            ],
            "timings": [vars(t).copy() for t in self.timings],
            "excluded_users": {str(f): n for f, n in self.excluded_users.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> MetricReport:
        return cls(
            dataset=doc.get("dataset", ""),
            cells=[CellResult(**c) for c in doc.get("cells", [])],
            timings=[Timing(**t) for t in doc.get("timings", [])],
            environment=doc.get("environment", {}),
            excluded_users={int(f): int(n) for f, n in doc.get("excluded_users", {}).items()},
        )

    @classmethod
    def from_json(cls, text: str) -> MetricReport:
        return cls.from_dict(json.loads(text))
