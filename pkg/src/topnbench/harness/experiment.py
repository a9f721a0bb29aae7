"""Per-fold training and evaluation, and random-search tuning."""
from __future__ import annotations

import logging
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ..corpus import Fold, InteractionMatrix, SplitSet, carve_validation, prepare, split_repeated_holdout
from ..metrics import CellResult, EvalContext, MetricReport, Timing, accuracy, evaluate
from ..models import make
from ..models.base import Recommender, as_rng
from .config import ExperimentConfig
from .presets import SearchSpace

_log = logging.getLogger(__name__)


def environment() -> dict:
    return {
        "machine": platform.machine(),
        "processor": platform.processor() or platform.machine(),
        "cpus": os.cpu_count(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def leaked_pairs(lists: Mapping, train: InteractionMatrix) -> int:
    """Number of recommended (user, item) pairs already in ``train``."""
    x = train.csr
    n = 0
    for u, entry in lists.items():
        items = np.asarray(getattr(entry, "items", entry))
        n += int(np.isin(items, x.indices[x.indptr[u] : x.indptr[u + 1]]).sum())
    return n


def run_cell(
    name: str, params: Mapping[str, Any], fold: Fold, cutoffs: Sequence[int], **eval_kw
) -> tuple[dict[int, dict[str, float]], float, float]:
    """Fit on the fold's train part and evaluate; returns ``(values by cutoff, train s, eval s)``."""
    model = make(name, **params)
    t0 = time.perf_counter()
    model.fit(fold.train)
    t1 = time.perf_counter()
    lists = model.recommend_all(n=max(cutoffs))
    leaks = leaked_pairs(lists, fold.train)
    if leaks:
        raise RuntimeError(f"{name} recommended {leaks} train items")
    values = evaluate(lists, EvalContext.from_fold(fold, max(cutoffs)), cutoffs, **eval_kw)
    t2 = time.perf_counter()
    return values, t1 - t0, t2 - t1


def run_folds(
    splits: SplitSet,
    algorithms: Mapping[str, Mapping[str, Any]],
    cutoffs: Sequence[int] = (10, 20),
    dataset: str = "",
    **eval_kw,
) -> MetricReport:
    """Every algorithm on every fold.  A failing (algorithm, fold) cell is recorded and skipped."""
    report = MetricReport(dataset=dataset, environment=environment())
    report.excluded_users = {f: len(fold.non_evaluable) for f, fold in enumerate(splits)}
    for name, params in algorithms.items():
        for f, fold in enumerate(splits):
            _log.info("%s fold %d", name, f)
            try:
                values, t_train, t_eval = run_cell(name, params, fold, cutoffs, **eval_kw)
            except Exception as e:  # noqa: BLE001 - the cell is marked failed and the run goes on
                _log.error("%s fold %d failed: %s", name, f, e)
                for k in cutoffs:
                    report.add(CellResult(name, f, k, None, f"{type(e).__name__}: {e}"))
                continue
            for k in cutoffs:
                report.add(CellResult(name, f, k, values[k]))
            report.timings.append(Timing(name, f, t_train, t_eval))
    return report


def algorithm_table(config: ExperimentConfig) -> dict[str, dict]:
    return {a.name: a.resolved() for a in config.algorithms}


def load_splits(config: ExperimentConfig) -> tuple[InteractionMatrix, SplitSet]:
    ds = config.dataset
    m, _ = prepare(ds.path, ds.format, ds.columns, ds.threshold, ds.p, ds.header, ds.unary)
    return m, split_repeated_holdout(m, config.test_fraction, config.repeats, config.seed)


def run_experiment(config: ExperimentConfig, splits: SplitSet | None = None, **eval_kw) -> MetricReport:
    if splits is None:
        _, splits = load_splits(config)
    return run_folds(splits, algorithm_table(config), config.cutoffs, config.dataset.name, **eval_kw)


# --------------------------------------------------------------- tuning


class TuningError(RuntimeError):
    pass


@dataclass
class Trial:
    params: dict
    score: float | None
    error: str | None = None


@dataclass
class TuneResult:
    algorithm: str
    best: dict
    score: float
    trials: list[Trial] = field(default_factory=list)


def validation_ndcg(model: Recommender, validation: sp.csr_matrix, k: int = 10) -> float:
    truth = {
        u: validation.indices[validation.indptr[u] : validation.indptr[u + 1]]
        for u in range(validation.shape[0])
        if validation.indptr[u + 1] > validation.indptr[u]
    }
    lists = model.recommend_all(n=k)
    ctx = EvalContext(model.train_.item_degrees(), truth, k)
    return accuracy(lists, ctx)["nDCG"]


def _is_point(space: SearchSpace) -> bool:
    return all(
        (p.kind == "choice" and len(p.choices) == 1) or (p.kind != "choice" and p.low == p.high)
        for p in space.params
    )


def tune(
    algorithm: str,
    space: SearchSpace,
    trials: int,
    train: InteractionMatrix,
    seed: int = 42,
    fixed: Mapping[str, Any] | None = None,
    k: int = 10,
    objective: Callable[[Recommender, sp.csr_matrix], float] | None = None,
) -> TuneResult:
    """Random search maximizing validation nDCG@k; ties keep the earlier trial.

    The validation set is carved from ``train``; ``fixed`` values go to every
    trial unchanged.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    objective = objective or (lambda m, v: validation_ndcg(m, v, k))
    inner, validation = carve_validation(train, 0.2, seed)
    rng = as_rng(seed)
    if _is_point(space):
        trials = 1
    history: list[Trial] = []
    best: Trial | None = None
    for t in range(trials):
        params = space.sample(rng)
        params.update(fixed or {})
        try:
            score = float(objective(make(algorithm, **params).fit(inner), validation))
            if not np.isfinite(score):
                raise FloatingPointError("non-finite validation score")
        except Exception as e:  # noqa: BLE001 - recorded in the trial log
            history.append(Trial(params, None, f"{type(e).__name__}: {e}"))
            _log.warning("%s trial %d failed: %s", algorithm, t, e)
            continue
        trial = Trial(params, score)
        history.append(trial)
        _log.info("%s trial %d: nDCG@%d=%.5f %s", algorithm, t, k, score, params)
        if best is None or score > best.score:
            best = trial
    if best is None:
        detail = "; ".join(f"trial {i}: {tr.error}" for i, tr in enumerate(history))
        raise TuningError(f"every {algorithm} trial failed: {detail}")
    return TuneResult(algorithm, best.params, best.score, history)
